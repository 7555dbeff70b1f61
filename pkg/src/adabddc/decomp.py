"""Uniform nonoverlapping partition, interface equivalence classes and the
index maps between global interface unknowns, subdomain boundaries and the
partially coupled (dual x primal) space.

Subdomain ``(I, J)`` of a ``p x p`` partition has index ``J * p + I``.  The
global interface space lists interface nodes in ascending node order; a local
boundary space lists the subdomain's interface nodes in the same order.
"""

from dataclasses import dataclass

import numpy as np


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class Subdomain:
    index: int
    nodes: np.ndarray  # free nodes of the closure, ascending
    interior: np.ndarray  # free nodes strictly inside
    boundary: np.ndarray  # interface nodes on the closure, ascending
    elements: np.ndarray


@dataclass(frozen=True)
class Partition:
    grid: object
    per_side: int
    subdomains: tuple
    interface: np.ndarray  # global node ids of interface nodes, ascending

    @property
    def N(self):
        return self.per_side**2

    @property
    def H(self):
        return 1.0 / self.per_side

    def gamma_index(self, nodes):
        """Positions of interface `nodes` within the global interface list."""
        nodes = np.asarray(nodes, dtype=np.int64)
        if nodes.size == 0:
            return np.zeros(0, dtype=np.int64)
        pos = np.searchsorted(self.interface, nodes)
        if np.any(pos >= self.interface.size) or np.any(self.interface[np.minimum(pos, self.interface.size - 1)] != nodes):
            raise KeyError("node is not an interface node")
        return pos


@dataclass(frozen=True)
class Edge:
    subdomains: tuple  # (i, j) with i < j
    nodes: np.ndarray  # interior-of-edge nodes, ascending


@dataclass(frozen=True)
class Vertex:
    subdomains: tuple
    node: int


@dataclass(frozen=True)
class InterfaceClasses:
    edges: tuple
    vertices: tuple

    def layout(self):
        """Serializable edge/vertex layout (edge order defines target order)."""
        return {
            "edges": [{"subdomains": list(e.subdomains), "nodes": e.nodes.tolist()} for e in self.edges],
            "vertices": [{"subdomains": list(v.subdomains), "node": int(v.node)} for v in self.vertices],
        }


def partition_uniform(grid, per_side=4):
    n = grid.n
    if per_side < 1 or n % per_side:
        raise PartitionError(f"grid n={n} is not divisible by per_side={per_side}")
    m = n // per_side
    ix = np.arange(grid.num_nodes) % (n + 1)
    iy = np.arange(grid.num_nodes) // (n + 1)
    on_boundary = grid.boundary_mask()
    elem_cell = np.arange(grid.num_elements) // 2
    ecx, ecy = elem_cell % n, elem_cell // n

    count = np.zeros(grid.num_nodes, dtype=int)
    boxes = []
    for J in range(per_side):
        for I in range(per_side):
            in_box = (ix >= I * m) & (ix <= (I + 1) * m) & (iy >= J * m) & (iy <= (J + 1) * m)
            count += in_box
            boxes.append(in_box)
    is_interface = (count >= 2) & ~on_boundary
    interface = np.flatnonzero(is_interface)

    subs = []
    for s, in_box in enumerate(boxes):
        I, J = s % per_side, s // per_side
        free = in_box & ~on_boundary
        elems = np.flatnonzero((ecx // m == I) & (ecy // m == J))
        subs.append(
            Subdomain(
                index=s,
                nodes=np.flatnonzero(free),
                interior=np.flatnonzero(free & ~is_interface),
                boundary=np.flatnonzero(free & is_interface),
                elements=elems,
            )
        )
    return Partition(grid, per_side, tuple(subs), interface)


def _owners(partition):
    """Map interface node -> sorted tuple of subdomains whose closure holds it."""
    owners = {}
    for sub in partition.subdomains:
        for node in sub.boundary:
            owners.setdefault(int(node), []).append(sub.index)
    return {k: tuple(sorted(v)) for k, v in owners.items()}


def classify_interface(partition):
    owners = _owners(partition)
    edge_nodes = {}
    vertices = []
    for node in sorted(owners):
        subs = owners[node]
        if len(subs) == 2:
            edge_nodes.setdefault(subs, []).append(node)
        else:
            vertices.append(Vertex(subs, node))
    edges = tuple(Edge(k, np.array(edge_nodes[k], dtype=np.int64)) for k in sorted(edge_nodes))
    return InterfaceClasses(edges, tuple(vertices))


def multiplicity(partition):
    """Number of subdomains sharing each global interface unknown."""
    mult = np.zeros(partition.interface.size)
    for sub in partition.subdomains:
        mult[partition.gamma_index(sub.boundary)] += 1.0
    return mult


@dataclass(frozen=True)
class LocalDofs:
    """Per-subdomain view of the transformed interface coordinates.

    Local coordinate ``a`` corresponds to global interface position
    ``gamma[a]``.  Transformed coordinates keep the slot layout of the nodes:
    on an edge with ``k`` constraints the first ``k`` slots are primal.
    """

    gamma: np.ndarray
    primal_local: np.ndarray
    primal_global: np.ndarray
    dual_local: np.ndarray


@dataclass(frozen=True)
class DofSpaces:
    partition: Partition
    classes: InterfaceClasses
    counts: tuple  # constraints per edge
    local: tuple
    num_primal: int
    edge_slots: tuple  # global interface positions of each edge's nodes
    vertex_slots: np.ndarray

    @property
    def num_dual(self):
        return sum(ld.dual_local.size for ld in self.local)

    def restrict(self, w):
        """Local copies ``R_i w`` of a global interface vector."""
        return [w[ld.gamma] for ld in self.local]

    def assemble(self, parts):
        """``sum_i R_i^T w_i``."""
        out = np.zeros(self.partition.interface.size)
        for ld, w in zip(self.local, parts):
            np.add.at(out, ld.gamma, w)
        return out


def build_restrictions(partition, classes, constraints=None):
    """Index maps for the BDDC operators.

    `constraints` holds one entry per edge: either an ``(k, |F|)`` array of
    constraint vectors or an integer count.  Primal unknowns are the
    subdomain vertices followed by the per-edge constraint slots in edge
    order.
    """
    n_edges = len(classes.edges)
    if constraints is None:
        constraints = [0] * n_edges
    if len(constraints) != n_edges:
        raise PartitionError(f"{len(constraints)} constraint blocks for {n_edges} edges")
    counts = []
    for edge, c in zip(classes.edges, constraints):
        if np.isscalar(c):
            k = int(c)
        else:
            c = np.atleast_2d(np.asarray(c, dtype=float))
            if c.size and c.shape[1] != edge.nodes.size:
                raise PartitionError(
                    f"constraint length {c.shape[1]} != edge size {edge.nodes.size} for edge {edge.subdomains}"
                )
            k = c.shape[0] if c.size else 0
        if not 0 <= k <= edge.nodes.size:
            raise PartitionError(f"{k} constraints on an edge with {edge.nodes.size} nodes")
        counts.append(k)

    n_gamma = partition.interface.size
    primal_id = np.full(n_gamma, -1, dtype=np.int64)
    vertex_slots = partition.gamma_index(np.array([v.node for v in classes.vertices], dtype=np.int64))
    primal_id[vertex_slots] = np.arange(vertex_slots.size)
    next_id = vertex_slots.size
    edge_slots = []
    for edge, k in zip(classes.edges, counts):
        slots = partition.gamma_index(edge.nodes)
        edge_slots.append(slots)
        primal_id[slots[:k]] = np.arange(next_id, next_id + k)
        next_id += k

    local = []
    for sub in partition.subdomains:
        gamma = partition.gamma_index(sub.boundary)
        pid = primal_id[gamma]
        is_p = pid >= 0
        local.append(
            LocalDofs(
                gamma=gamma,
                primal_local=np.flatnonzero(is_p),
                primal_global=pid[is_p],
                dual_local=np.flatnonzero(~is_p),
            )
        )
    return DofSpaces(partition, classes, tuple(counts), tuple(local), int(next_id), tuple(edge_slots), vertex_slots)
