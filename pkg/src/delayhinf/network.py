"""Networked plants, decentralized controllers, and decoupling.

A network of N identical delay subsystems coupled through a symmetric
adjacency matrix decouples, node by node, into one uncertain subsystem
parameterized by a scalar lambda ranging over the adjacency
eigenvalues.  The exact network norm is the maximum of the fixed-lambda
norms over those eigenvalues; the robust norm over the enclosing
interval upper-bounds it for every network size at a cost independent
of N.
"""

from dataclasses import dataclass

import numpy as np

from ._threads import ordered_map
from .errors import AssumptionError, InstabilityError, ParseError, ValidationError
from .hinf import hinf_norm_fixed
from .sysmodel import UncertainDelaySystem, _numeric_array, _require

SYMMETRY_TOL = 1e-10
EIGENVALUE_DEDUPE_TOL = 1e-12
MAX_FULL_STATES = 2000

MATRIX_ORDER = ("J", "F", "Fn", "L", "K", "Kn")


def _matrix(value, name, shape=None):
    arr = np.array(value, dtype=float)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be a matrix, got shape {arr.shape}")
    if shape is not None and arr.shape != shape:
        raise ValidationError(f"{name} must have shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class NetworkedPlant:
    """One node of the network: identical LTI delay dynamics with an
    actuation channel (delay tau_u), a physical coupling channel driven
    by the neighbors' coupling outputs (delay tau_n), and a controller
    communication channel (delay tau_nc).
    """

    delays: tuple
    a_mats: tuple
    b_u: np.ndarray
    b_un: np.ndarray
    b_w: np.ndarray
    c_y: np.ndarray
    c_yn: np.ndarray
    c_z: np.ndarray
    tau_u: float
    tau_n: float
    tau_nc: float

    def __post_init__(self):
        delays = tuple(float(t) for t in self.delays)
        if not delays or delays[0] != 0.0:
            raise ValidationError("plant delays must start at exactly 0.0")
        if any(b <= a for a, b in zip(delays, delays[1:])):
            raise ValidationError(f"plant delays must be strictly increasing: {delays}")
        if len(self.a_mats) != len(delays):
            raise ValidationError(
                f"got {len(self.a_mats)} A matrices for {len(delays)} delays"
            )
        a_mats = tuple(_matrix(a, f"A[{k}]") for k, a in enumerate(self.a_mats))
        n = a_mats[0].shape[0]
        for k, a in enumerate(a_mats):
            if a.shape != (n, n):
                raise ValidationError(f"A[{k}] must be {n}x{n}, got {a.shape}")
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "a_mats", a_mats)
        for name in ("b_u", "b_un", "b_w"):
            mat = _matrix(getattr(self, name), name)
            if mat.shape[0] != n:
                raise ValidationError(f"{name} must have {n} rows, got {mat.shape[0]}")
            object.__setattr__(self, name, mat)
        for name in ("c_y", "c_yn", "c_z"):
            mat = _matrix(getattr(self, name), name)
            if mat.shape[1] != n:
                raise ValidationError(
                    f"{name} must have {n} columns, got {mat.shape[1]}"
                )
            object.__setattr__(self, name, mat)
        if self.b_un.shape[1] != self.c_yn.shape[0]:
            raise ValidationError(
                f"b_un columns ({self.b_un.shape[1]}) must match c_yn rows "
                f"({self.c_yn.shape[0]})"
            )
        for name in ("tau_u", "tau_n", "tau_nc"):
            val = float(getattr(self, name))
            if not np.isfinite(val) or val < 0.0:
                raise ValidationError(f"{name} must be a nonnegative real, got {val}")
            object.__setattr__(self, name, val)

    @property
    def n(self):
        return self.a_mats[0].shape[0]

    @property
    def m(self):
        return self.b_w.shape[1]

    @property
    def p(self):
        return self.c_z.shape[0]

    @property
    def m_c(self):
        return self.b_u.shape[1]

    @property
    def p_c(self):
        return self.c_y.shape[0]


@dataclass(frozen=True)
class ControllerParams:
    """Order-n_c output feedback controller with a tunability mask.

    The flat parameter vector p collects the tunable entries row-major
    per matrix, matrices ordered J, F, Fn, L, K, Kn; masked-out entries
    stay frozen at their construction values.
    """

    n_c: int
    j_mat: np.ndarray
    f_mat: np.ndarray
    fn_mat: np.ndarray
    l_mat: np.ndarray
    k_mat: np.ndarray
    kn_mat: np.ndarray
    mask: tuple = None

    def __post_init__(self):
        n_c = int(self.n_c)
        if n_c < 0:
            raise ValidationError(f"n_c must be nonnegative, got {n_c}")
        object.__setattr__(self, "n_c", n_c)
        j_mat = _matrix(self.j_mat, "J", (n_c, n_c))
        f_mat = _matrix(self.f_mat, "F")
        if f_mat.shape[0] != n_c:
            raise ValidationError(f"F must have {n_c} rows, got {f_mat.shape[0]}")
        p_c = f_mat.shape[1]
        fn_mat = _matrix(self.fn_mat, "Fn", (n_c, p_c))
        l_mat = _matrix(self.l_mat, "L")
        if l_mat.shape[1] != n_c:
            raise ValidationError(f"L must have {n_c} columns, got {l_mat.shape[1]}")
        m_c = l_mat.shape[0]
        k_mat = _matrix(self.k_mat, "K", (m_c, p_c))
        kn_mat = _matrix(self.kn_mat, "Kn", (m_c, p_c))
        mats = (j_mat, f_mat, fn_mat, l_mat, k_mat, kn_mat)
        for name, mat in zip(
            ("j_mat", "f_mat", "fn_mat", "l_mat", "k_mat", "kn_mat"), mats
        ):
            object.__setattr__(self, name, mat)
        if self.mask is None:
            mask = tuple(np.ones(m.shape, dtype=bool) for m in mats)
        else:
            if len(self.mask) != 6:
                raise ValidationError("mask must give one pattern per matrix")
            mask = []
            for name, mat, pat in zip(MATRIX_ORDER, mats, self.mask):
                arr = np.array(pat, dtype=bool)
                if arr.shape != mat.shape:
                    raise ValidationError(
                        f"mask for {name} must have shape {mat.shape}, got {arr.shape}"
                    )
                arr.setflags(write=False)
                mask.append(arr)
            mask = tuple(mask)
        object.__setattr__(self, "mask", mask)

    @property
    def matrices(self):
        return (self.j_mat, self.f_mat, self.fn_mat, self.l_mat, self.k_mat, self.kn_mat)

    @property
    def p(self):
        """Tunable entries, row-major within each matrix."""
        return np.concatenate(
            [m[sel] for m, sel in zip(self.matrices, self.mask)]
        ) if self.n_params else np.zeros(0)

    @property
    def n_params(self):
        return int(sum(sel.sum() for sel in self.mask))

    @property
    def m_c(self):
        return self.l_mat.shape[0]

    @property
    def p_c(self):
        return self.f_mat.shape[1]

    def with_p(self, p):
        """New controller with the tunable entries replaced by p."""
        p = np.asarray(p, dtype=float).ravel()
        if p.size != self.n_params:
            raise ValidationError(
                f"parameter vector must have {self.n_params} entries, got {p.size}"
            )
        mats = []
        offset = 0
        for mat, sel in zip(self.matrices, self.mask):
            count = int(sel.sum())
            new = np.array(mat)
            new[sel] = p[offset:offset + count]
            offset += count
            mats.append(new)
        return ControllerParams(self.n_c, *mats, mask=self.mask)


@dataclass(frozen=True)
class Topology:
    """Symmetric adjacency matrix with its real spectrum and an
    enclosing uncertainty interval."""

    p_matrix: np.ndarray
    eigenvalues: tuple
    interval: tuple

    def __post_init__(self):
        mat = _matrix(self.p_matrix, "p_matrix")
        if mat.shape[0] != mat.shape[1]:
            raise ValidationError(f"adjacency matrix must be square, got {mat.shape}")
        if np.abs(mat - mat.T).max() > 1e-12:
            raise ValidationError("adjacency matrix must be symmetric within 1e-12")
        object.__setattr__(self, "p_matrix", mat)
        eig = tuple(float(e) for e in self.eigenvalues)
        if any(b < a for a, b in zip(eig, eig[1:])):
            raise ValidationError("eigenvalues must be sorted ascending")
        if len(eig) != mat.shape[0]:
            raise ValidationError(
                f"expected {mat.shape[0]} eigenvalues, got {len(eig)}"
            )
        object.__setattr__(self, "eigenvalues", eig)
        a, b = (float(v) for v in self.interval)
        if not (np.isfinite(a) and np.isfinite(b) and a <= b):
            raise ValidationError(f"interval must be finite with a <= b, got {(a, b)}")
        if eig and (eig[0] < a - 1e-12 or eig[-1] > b + 1e-12):
            raise ValidationError(
                f"interval {(a, b)} does not enclose the spectrum "
                f"[{eig[0]}, {eig[-1]}]"
            )
        object.__setattr__(self, "interval", (a, b))

    @property
    def n_nodes(self):
        return self.p_matrix.shape[0]


def check_assumption(p_matrix):
    """Validate an adjacency matrix for the decoupling transformation.

    Symmetry is the sufficient condition used: it guarantees unitary
    diagonalizability with a real spectrum.  Normal matrices with
    complex eigenvalues are rejected because the uncertain parameter
    must range over a real interval.
    """
    mat = np.array(p_matrix, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValidationError(f"adjacency matrix must be square, got shape {mat.shape}")
    asym = float(np.abs(mat - mat.T).max()) if mat.size else 0.0
    if asym > SYMMETRY_TOL:
        raise AssumptionError(
            f"adjacency matrix is asymmetric (max deviation {asym:.3e}); the "
            "decoupling requires a symmetric matrix with real eigenvalues"
        )
    sym = (mat + mat.T) / 2.0
    eig = np.sort(np.linalg.eigvalsh(sym))
    return Topology(sym, tuple(eig), (float(eig[0]), float(eig[-1])))


def _closed_form_topology(p_matrix, eigenvalues):
    eig = np.sort(np.asarray(eigenvalues, dtype=float))
    numeric = np.sort(np.linalg.eigvalsh(p_matrix))
    if np.abs(eig - numeric).max() > 1e-10:
        raise ValidationError(
            "closed-form topology eigenvalues disagree with the numerical "
            f"spectrum by {np.abs(eig - numeric).max():.3e}"
        )
    return Topology(p_matrix, tuple(eig), (-1.0, 1.0))


def adjacency_ring(n_nodes):
    """Bidirectional ring, each edge weighted 0.5.

    Eigenvalues are cos(2 pi (j-1) / N) for j = 1..N; for N = 2 the two
    half-weight couplings coincide on one edge and add to 1.
    """
    if int(n_nodes) != n_nodes or n_nodes < 2:
        raise ValidationError(f"ring topology needs an integer N >= 2, got {n_nodes}")
    n_nodes = int(n_nodes)
    mat = np.zeros((n_nodes, n_nodes))
    for i in range(n_nodes):
        mat[i, (i + 1) % n_nodes] += 0.5
        mat[i, (i - 1) % n_nodes] += 0.5
    eig = np.cos(2.0 * np.pi * np.arange(n_nodes) / n_nodes)
    return _closed_form_topology(mat, eig)


def adjacency_line(n_nodes):
    """Bidirectional line, each edge weighted 0.5.

    Eigenvalues are cos(j pi / (N+1)) for j = 1..N.
    """
    if int(n_nodes) != n_nodes or n_nodes < 2:
        raise ValidationError(f"line topology needs an integer N >= 2, got {n_nodes}")
    n_nodes = int(n_nodes)
    mat = np.zeros((n_nodes, n_nodes))
    for i in range(n_nodes - 1):
        mat[i, i + 1] = 0.5
        mat[i + 1, i] = 0.5
    eig = np.cos(np.arange(1, n_nodes + 1) * np.pi / (n_nodes + 1))
    return _closed_form_topology(mat, eig)


def _check_compatible(plant, ctrl):
    if ctrl.p_c != plant.p_c:
        raise ValidationError(
            f"controller expects {ctrl.p_c} measured outputs, plant provides "
            f"{plant.p_c}"
        )
    if ctrl.m_c != plant.m_c:
        raise ValidationError(
            f"controller provides {ctrl.m_c} actuation inputs, plant expects "
            f"{plant.m_c}"
        )


def build_decoupled_subsystem(plant, ctrl, interval=(-1.0, 1.0)):
    """Closed-loop subsystem of one node, parameterized by lambda.

    State is [x; x_c].  The lambda-independent part collects the plant
    delays, the local feedthrough (J and F C_y at delay 0), and the
    actuation terms B_u K C_y and B_u L at tau_u.  The
    lambda-coefficient part collects the physical coupling B_un C_yn at
    tau_n, the communicated feedback B_u Kn C_y at tau_u + tau_nc, and
    Fn C_y at tau_nc.  Coincident delays merge by addition; slots that
    end up all zero are dropped.
    """
    _check_compatible(plant, ctrl)
    n, n_c = plant.n, ctrl.n_c
    dim = n + n_c
    slots = {}

    def slot(tau):
        return slots.setdefault(
            float(tau), [np.zeros((dim, dim)), np.zeros((dim, dim))]
        )

    for tau, a_mat in zip(plant.delays, plant.a_mats):
        slot(tau)[0][:n, :n] += a_mat
    base = slot(0.0)[0]
    base[n:, :n] += ctrl.f_mat @ plant.c_y
    base[n:, n:] += ctrl.j_mat
    act = slot(plant.tau_u)[0]
    act[:n, :n] += plant.b_u @ ctrl.k_mat @ plant.c_y
    act[:n, n:] += plant.b_u @ ctrl.l_mat
    slot(plant.tau_n)[1][:n, :n] += plant.b_un @ plant.c_yn
    slot(plant.tau_u + plant.tau_nc)[1][:n, :n] += (
        plant.b_u @ ctrl.kn_mat @ plant.c_y
    )
    slot(plant.tau_nc)[1][n:, :n] += ctrl.fn_mat @ plant.c_y

    delays = sorted(
        tau for tau, (h, g) in slots.items()
        if tau == 0.0 or np.any(h) or np.any(g)
    )
    h_mats = [slots[tau][0] for tau in delays]
    g_mats = [slots[tau][1] for tau in delays]
    b_w = np.vstack([plant.b_w, np.zeros((n_c, plant.m))])
    c_z = np.hstack([plant.c_z, np.zeros((plant.p, n_c))])
    return UncertainDelaySystem(
        delays=delays, h_mats=h_mats, g_mats=g_mats, b_w=b_w, c_z=c_z,
        interval=interval,
    )


def build_closed_loop_full(plant, ctrl, topo):
    """Closed loop of the whole network, Kronecker-assembled.

    Every delay slot of the decoupled subsystem contributes
    I_N (x) H_r + P_N (x) G_r; the result is a lambda-free system
    intended as a small-N oracle for the decoupling.
    """
    sub = build_decoupled_subsystem(plant, ctrl)
    n_nodes = topo.n_nodes
    states = n_nodes * sub.n
    if states > MAX_FULL_STATES:
        raise ValidationError(
            f"full network would have {states} states, above the "
            f"{MAX_FULL_STATES}-state guard"
        )
    eye = np.eye(n_nodes)
    h_mats = [
        np.kron(eye, h) + np.kron(topo.p_matrix, g)
        for h, g in zip(sub.h_mats, sub.g_mats)
    ]
    g_mats = [np.zeros((states, states)) for _ in h_mats]
    return UncertainDelaySystem(
        delays=sub.delays,
        h_mats=h_mats,
        g_mats=g_mats,
        b_w=np.kron(eye, sub.b_w),
        c_z=np.kron(eye, sub.c_z),
        interval=None,
    )


def decoupled_norm_exact(plant, ctrl, topo):
    """Exact network norm: max fixed-lambda norm over the adjacency
    eigenvalues (near-coincident eigenvalues evaluated once)."""
    sub = build_decoupled_subsystem(plant, ctrl, interval=topo.interval)
    unique = []
    for lam in topo.eigenvalues:
        if not unique or lam - unique[-1] > EIGENVALUE_DEDUPE_TOL:
            unique.append(lam)

    def one(lam):
        try:
            return hinf_norm_fixed(sub, lam).norm
        except InstabilityError:
            raise InstabilityError(
                f"closed-loop subsystem is unstable at topology eigenvalue "
                f"{lam:.12g}"
            ) from None

    return max(ordered_map(one, unique))


def build_cart_pendulum(M, m, k, l, g, tau_u, tau_nc):
    """Cart with inverted pendulum, spring-coupled to its neighbors.

    Linearized around the upright equilibrium; the neighbor coupling
    acts through the spring force on the cart position (output
    2 x_cart), undelayed, while actuation and controller communication
    carry delays tau_u and tau_nc.
    """
    for name, val in (("M", M), ("m", m), ("k", k), ("l", l), ("g", g)):
        if not val > 0:
            raise ValidationError(f"physical parameter {name} must be positive, got {val}")
    for name, val in (("tau_u", tau_u), ("tau_nc", tau_nc)):
        if val < 0:
            raise ValidationError(f"{name} must be nonnegative, got {val}")
    a_mat = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [-2.0 * k / M, 0.0, -m * g / M, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [2.0 * k / (M * l), 0.0, g / l + m * g / (M * l), 0.0],
    ])
    b_u = np.array([[0.0], [1.0 / M], [0.0], [-1.0 / (M * l)]])
    b_un = np.array([[0.0], [k / M], [0.0], [-k / (M * l)]])
    b_w = np.array([
        [0.0, 0.0],
        [1.0 / M, -m / M],
        [0.0, 0.0],
        [-1.0 / (M * l), 1.0 / l + m / (M * l)],
    ])
    c_y = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    c_yn = np.array([[2.0, 0.0, 0.0, 0.0]])
    return NetworkedPlant(
        delays=(0.0,),
        a_mats=(a_mat,),
        b_u=b_u,
        b_un=b_un,
        b_w=b_w,
        c_y=c_y,
        c_yn=c_yn,
        c_z=c_y,
        tau_u=float(tau_u),
        tau_n=0.0,
        tau_nc=float(tau_nc),
    )


def plant_to_dict(plant):
    return {
        "delays": list(plant.delays),
        "A": [a.tolist() for a in plant.a_mats],
        "Bu": plant.b_u.tolist(),
        "Bun": plant.b_un.tolist(),
        "Bw": plant.b_w.tolist(),
        "Cy": plant.c_y.tolist(),
        "Cyn": plant.c_yn.tolist(),
        "Cz": plant.c_z.tolist(),
        "tau_u": plant.tau_u,
        "tau_n": plant.tau_n,
        "tau_nc": plant.tau_nc,
    }


def plant_from_dict(doc):
    if not isinstance(doc, dict):
        raise ParseError("plant document must be a JSON object", field=None)
    delays = _numeric_array(_require(doc, "delays", list), "delays", 1)
    a_raw = _require(doc, "A", list)
    a_mats = [_numeric_array(a, f"A[{k}]", 2) for k, a in enumerate(a_raw)]
    mats = {
        key: _numeric_array(_require(doc, key, list), key, 2)
        for key in ("Bu", "Bun", "Bw", "Cy", "Cyn", "Cz")
    }
    taus = {}
    for key in ("tau_u", "tau_n", "tau_nc"):
        val = _require(doc, key, (int, float))
        taus[key] = float(val)
    return NetworkedPlant(
        delays=tuple(delays),
        a_mats=tuple(a_mats),
        b_u=mats["Bu"],
        b_un=mats["Bun"],
        b_w=mats["Bw"],
        c_y=mats["Cy"],
        c_yn=mats["Cyn"],
        c_z=mats["Cz"],
        **taus,
    )


def controller_to_dict(ctrl):
    doc = {
        "n_c": ctrl.n_c,
        "J": ctrl.j_mat.tolist(),
        "F": ctrl.f_mat.tolist(),
        "Fn": ctrl.fn_mat.tolist(),
        "L": ctrl.l_mat.tolist(),
        "K": ctrl.k_mat.tolist(),
        "Kn": ctrl.kn_mat.tolist(),
    }
    if not all(sel.all() for sel in ctrl.mask):
        doc["mask"] = {
            name: sel.astype(int).tolist()
            for name, sel in zip(MATRIX_ORDER, ctrl.mask)
        }
    return doc


def controller_from_dict(doc):
    if not isinstance(doc, dict):
        raise ParseError("controller document must be a JSON object", field=None)
    n_c = _require(doc, "n_c", int)
    mats = {
        key: _numeric_array(_require(doc, key, list), key, 2)
        for key in MATRIX_ORDER
    }
    mask = None
    if "mask" in doc:
        raw = _require(doc, "mask", dict)
        mask = []
        for key, mat in zip(MATRIX_ORDER, mats.values()):
            pattern = _numeric_array(
                _require(raw, key, list), f"mask.{key}", 2
            )
            mask.append(pattern != 0)
        mask = tuple(mask)
    return ControllerParams(
        n_c=n_c,
        j_mat=mats["J"],
        f_mat=mats["F"],
        fn_mat=mats["Fn"],
        l_mat=mats["L"],
        k_mat=mats["K"],
        kn_mat=mats["Kn"],
        mask=mask,
    )


def topology_to_dict(topo):
    return {"P": topo.p_matrix.tolist()}


def topology_from_dict(doc):
    if not isinstance(doc, dict):
        raise ParseError("topology document must be a JSON object", field=None)
    mat = _numeric_array(_require(doc, "P", list), "P", 2)
    return check_assumption(mat)
