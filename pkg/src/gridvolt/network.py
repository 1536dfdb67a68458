"""Radial distribution network model and voltage sensitivity matrices.

All electrical quantities are stored in per-unit. Powers are net
injections: consumption is negative. Bus 0 is always the feeder and is
held at 1.0 p.u. by convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROLE_FEEDER = "feeder"
ROLE_PQ = "pq"
ROLE_INVERTER = "inverter"
ROLE_DC = "dc"

_ROLES = (ROLE_FEEDER, ROLE_PQ, ROLE_INVERTER, ROLE_DC)

DEFAULT_S_BASE_KVA = 1000.0
DEFAULT_V_BASE_KV = 4.16


class NetworkError(ValueError):
    """Malformed network file or violated structural invariant."""


@dataclass(frozen=True)
class Bus:
    id: int
    role: str
    p_base: float = 0.0  # p.u. net injection (negative = consumption)
    q_base: float = 0.0
    q_min: float = 0.0  # controllable reactive bounds, inverter/dc only
    q_max: float = 0.0


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r: float  # p.u.
    x: float  # p.u.


@dataclass(frozen=True)
class SensitivityMatrices:
    """Voltage sensitivities: v = R p + X q + 1.

    Entry (i, j) is the summed line resistance (reactance) along the
    common portion of the root paths of buses i+1 and j+1. Both matrices
    are symmetric positive definite for any radial network.
    """

    R: np.ndarray
    X: np.ndarray


@dataclass
class Network:
    buses: list[Bus]
    lines: list[Line]
    s_base: float = DEFAULT_S_BASE_KVA  # kVA
    v_base: float = DEFAULT_V_BASE_KV  # kV

    # derived topology, filled by validate()
    parent: dict[int, int] = field(default_factory=dict, repr=False)
    parent_line: dict[int, int] = field(default_factory=dict, repr=False)
    children: dict[int, list[int]] = field(default_factory=dict, repr=False)
    bfs_order: list[int] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        self.validate()

    @property
    def n(self) -> int:
        """Number of non-feeder buses (vector dimension N)."""
        return len(self.buses) - 1

    def bus(self, bus_id: int) -> Bus:
        return self.buses[bus_id]

    def buses_with_role(self, role: str) -> list[int]:
        return [b.id for b in self.buses if b.role == role]

    def line_between(self, a: int, b: int) -> Line:
        for ln in self.lines:
            if {ln.from_bus, ln.to_bus} == {a, b}:
                return ln
        raise KeyError(f"no line between buses {a} and {b}")

    def validate(self) -> None:
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise NetworkError(f"duplicate bus ids: {dupes}")
        n_total = len(self.buses)
        if sorted(ids) != list(range(n_total)):
            raise NetworkError("bus ids must be contiguous 0..N")
        if n_total < 2:
            raise NetworkError("network needs a feeder and at least one bus")

        feeders = [b.id for b in self.buses if b.role == ROLE_FEEDER]
        if feeders != [0]:
            raise NetworkError(f"exactly bus 0 must be the feeder, got {feeders}")

        self.buses = sorted(self.buses, key=lambda b: b.id)
        for b in self.buses:
            if b.role not in _ROLES:
                raise NetworkError(f"bus {b.id}: unknown role {b.role!r}")
            if b.q_min > b.q_max:
                raise NetworkError(f"bus {b.id}: q_min > q_max")
            for v in (b.p_base, b.q_base, b.q_min, b.q_max):
                if not np.isfinite(v):
                    raise NetworkError(f"bus {b.id}: non-finite value")

        if len(self.lines) != n_total - 1:
            raise NetworkError(
                f"not radial: {n_total} buses need {n_total - 1} lines, "
                f"got {len(self.lines)}"
            )
        adj: dict[int, list[tuple[int, int]]] = {b.id: [] for b in self.buses}
        for k, ln in enumerate(self.lines):
            if ln.from_bus == ln.to_bus:
                raise NetworkError(f"line {k}: self-loop at bus {ln.from_bus}")
            for end in (ln.from_bus, ln.to_bus):
                if end not in adj:
                    raise NetworkError(f"line {k}: unknown bus {end}")
            if not (ln.r > 0.0 and ln.x > 0.0):
                raise NetworkError(f"line {k}: r and x must be positive")
            if not (np.isfinite(ln.r) and np.isfinite(ln.x)):
                raise NetworkError(f"line {k}: non-finite impedance")
            adj[ln.from_bus].append((ln.to_bus, k))
            adj[ln.to_bus].append((ln.from_bus, k))

        # Orient the tree away from the feeder by BFS; with N lines on N+1
        # buses, full coverage proves radiality and a revisit proves a cycle.
        self.parent, self.parent_line, self.children = {}, {}, {0: []}
        self.bfs_order = [0]
        seen = {0}
        frontier = [0]
        while frontier:
            nxt: list[int] = []
            for u in frontier:
                for v, k in adj[u]:
                    if v == self.parent.get(u):
                        continue
                    if v in seen:
                        raise NetworkError("not radial: cycle detected")
                    seen.add(v)
                    self.parent[v] = u
                    self.parent_line[v] = k
                    self.children.setdefault(u, []).append(v)
                    self.children.setdefault(v, [])
                    nxt.append(v)
                    self.bfs_order.append(v)
            frontier = nxt
        if len(seen) != n_total:
            missing = sorted(set(ids) - seen)
            raise NetworkError(f"not radial: buses {missing} unreachable from feeder")


def load_network(text: str) -> Network:
    """Parse a network file into a validated per-unit :class:`Network`.

    Format (one record per line, ``#`` starts a comment)::

        BASE <s_base_kVA> <v_base_kV>
        BUS <id> <feeder|pq|inverter|dc> <p_base_kW> <q_base_kvar> [q_min_kvar q_max_kvar]
        LINE <from> <to> <r_ohm> <x_ohm>

    Physical units in the file are converted against the bases; a BASE
    record, when present, must precede every BUS and LINE record.
    """
    s_base = DEFAULT_S_BASE_KVA
    v_base = DEFAULT_V_BASE_KV
    buses: list[Bus] = []
    raw_lines: list[tuple[int, int, float, float]] = []
    seen_records = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        tok = body.split()
        kind = tok[0].upper()
        try:
            if kind == "BASE":
                if seen_records:
                    raise NetworkError("BASE must come before BUS/LINE records")
                if len(tok) != 3:
                    raise NetworkError("BASE takes <s_base_kVA> <v_base_kV>")
                s_base, v_base = float(tok[1]), float(tok[2])
                if s_base <= 0 or v_base <= 0:
                    raise NetworkError("bases must be positive")
            elif kind == "BUS":
                seen_records = True
                if len(tok) not in (5, 7):
                    raise NetworkError("BUS takes id role p_kW q_kvar [q_min q_max]")
                role = tok[2].lower()
                if role not in _ROLES:
                    raise NetworkError(f"unknown role {tok[2]!r}")
                if len(tok) == 7 and role in (ROLE_FEEDER, ROLE_PQ):
                    raise NetworkError(f"{role} bus cannot carry reactive bounds")
                q_lo, q_hi = (float(tok[5]), float(tok[6])) if len(tok) == 7 else (0.0, 0.0)
                buses.append(
                    Bus(
                        id=int(tok[1]),
                        role=role,
                        p_base=float(tok[3]) / s_base,
                        q_base=float(tok[4]) / s_base,
                        q_min=q_lo / s_base,
                        q_max=q_hi / s_base,
                    )
                )
            elif kind == "LINE":
                seen_records = True
                if len(tok) != 5:
                    raise NetworkError("LINE takes from to r_ohm x_ohm")
                raw_lines.append((int(tok[1]), int(tok[2]), float(tok[3]), float(tok[4])))
            else:
                raise NetworkError(f"unknown record {tok[0]!r}")
        except NetworkError as exc:
            raise NetworkError(f"line {lineno}: {exc}") from None
        except ValueError as exc:
            raise NetworkError(f"line {lineno}: {exc}") from None

    z_base = (v_base**2) * 1000.0 / s_base  # ohm
    lines = [Line(f, t, r / z_base, x / z_base) for f, t, r, x in raw_lines]
    return Network(buses=buses, lines=lines, s_base=s_base, v_base=v_base)


def load_network_file(path) -> Network:
    with open(path, encoding="utf-8") as fh:
        return load_network(fh.read())


def root_paths(net: Network) -> dict[int, list[int]]:
    """Ordered line indices on each bus's path from the feeder, root first."""
    paths: dict[int, list[int]] = {0: []}
    for b in net.bfs_order[1:]:
        paths[b] = paths[net.parent[b]] + [net.parent_line[b]]
    return paths


def build_sensitivity(net: Network, squared: bool = False) -> SensitivityMatrices:
    """Construct the R and X matrices of the linear voltage model.

    Entry (i, j) sums r (resp. x) over the lines shared by the root paths
    of buses i+1 and j+1, which is the cumulative impedance up to their
    lowest common ancestor. With ``squared=True`` the entries are doubled,
    matching the squared-voltage-magnitude variant of the linear model;
    the default targets voltage magnitudes directly.
    """
    n = net.n
    cum_r = np.zeros(n + 1)
    cum_x = np.zeros(n + 1)
    depth = np.zeros(n + 1, dtype=int)
    for b in net.bfs_order[1:]:
        ln = net.lines[net.parent_line[b]]
        p = net.parent[b]
        cum_r[b] = cum_r[p] + ln.r
        cum_x[b] = cum_x[p] + ln.x
        depth[b] = depth[p] + 1

    def lca(a: int, b: int) -> int:
        while depth[a] > depth[b]:
            a = net.parent[a]
        while depth[b] > depth[a]:
            b = net.parent[b]
        while a != b:
            a, b = net.parent[a], net.parent[b]
        return a

    R = np.empty((n, n))
    X = np.empty((n, n))
    for i in range(1, n + 1):
        R[i - 1, i - 1] = cum_r[i]
        X[i - 1, i - 1] = cum_x[i]
        for j in range(i + 1, n + 1):
            a = lca(i, j)
            R[i - 1, j - 1] = R[j - 1, i - 1] = cum_r[a]
            X[i - 1, j - 1] = X[j - 1, i - 1] = cum_x[a]
    if squared:
        R, X = 2.0 * R, 2.0 * X
    if not (np.isfinite(R).all() and np.isfinite(X).all()):
        raise NetworkError("non-finite sensitivity entries")
    return SensitivityMatrices(R=R, X=X)
