"""Independent dense references for small systems.

Everything here is built from explicit Kronecker products and
``scipy.linalg.expm`` and shares no code with the package beyond reading
the disorder values of a ``SystemSpec``.  Conventions: site 0 is the most
significant bit, the cavity register is the fast (minor) index, one period
is ``H_f`` for ``pi/2`` followed by ``H_c`` for ``pi/2``.
"""
import math

import numpy as np
import scipy.linalg as sl

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}
LOWER = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|
HALF_PERIOD = math.pi / 2


def site_op(mat, site, n):
    out = np.ones((1, 1), dtype=complex)
    for s in range(n):
        out = np.kron(out, mat if s == site else I2)
    return out


def field_matrix(spec):
    n = spec.n_sites
    h = np.zeros((2**n, 2**n), dtype=complex)
    for i in range(n):
        for a, axis in enumerate("XYZ"):
            h += spec.disorder.fields[i, a] * site_op(PAULI[axis], i, n)
    return h


def coupling_matrix(spec):
    n = spec.n_sites
    h = np.zeros((2**n, 2**n), dtype=complex)
    for a, b in spec.geometry.edges:
        j = spec.coupling((a, b))
        for axis, c in (("X", 1), ("Y", 1), ("Z", -2)):
            h += c * j * site_op(PAULI[axis], a, n) @ site_op(PAULI[axis], b, n)
    return h


def cavity_dim(spec):
    if spec.cavity is None:
        return 1
    return (spec.cavity.cutoff if spec.cavity.cutoff is not None else spec.n_sites) + 1


def cavity_matrix(spec):
    """``g sum_i (a^dag s_i^- + a s_i^+) + omega a^dag a`` on spin x cavity."""
    n, m = spec.n_sites, cavity_dim(spec)
    a = np.diag(np.sqrt(np.arange(1, m)), 1).astype(complex)
    out = spec.cavity.omega * np.kron(np.eye(2**n), a.conj().T @ a)
    for i in range(n):
        lower = site_op(LOWER, i, n)
        out += spec.cavity.g * (np.kron(lower, a.conj().T) + np.kron(lower.conj().T, a))
    return out


def spin_parts(spec):
    m = cavity_dim(spec)
    hf = np.kron(field_matrix(spec), np.eye(m))
    hc = np.kron(coupling_matrix(spec), np.eye(m))
    return hf, hc


def pieces(spec, t0, t1):
    """``[(kind, duration)]`` of the drive between ``t0`` and ``t1`` periods."""
    period = 2 * HALF_PERIOD
    if spec.drive == "static":
        return [("static", (t1 - t0) * period)] if t1 > t0 else []
    out, t = [], t0
    while t < t1 - 1e-12:
        half = math.floor(2 * t + 1e-12)
        end = min((half + 1) / 2, t1)
        out.append(("field" if half % 2 == 0 else "coupling", (end - t) * period))
        t = end
    return out


def unitary(spec, t0, t1, direction="forward"):
    """Forward propagator, or its reversal with only the spin part negated."""
    hf, hc = spin_parts(spec)
    spin = {"field": hf, "coupling": hc, "static": hf + hc}
    extra = cavity_matrix(spec) if spec.cavity is not None else 0
    sign = 1 if direction == "forward" else -1
    seq = pieces(spec, t0, t1)
    if direction == "backward":
        seq = seq[::-1]
    u = np.eye(hf.shape[0], dtype=complex)
    for kind, s in seq:
        u = sl.expm(-1j * (sign * spin[kind] + extra) * s) @ u
    return u


def _op(spec, axis, site):
    return np.kron(site_op(PAULI[axis], site, spec.n_sites), np.eye(cavity_dim(spec)))


def _probe_v(spec, axis):
    p = spec.geometry.probe
    if p is None:
        return sum(_op(spec, axis, x) for x in range(spec.n_sites)) / math.sqrt(spec.n_sites)
    return _op(spec, axis, p)


def _rotation(spec, axis, phi):
    p = spec.geometry.probe
    g = sum(_op(spec, axis, x) for x in range(spec.n_sites) if x != p)
    return sl.expm(1j * phi * g)


def correlator(spec, s):
    """Infinite-temperature trace ``tr(P0 M^dag V M V') / 2^L`` of a spec (cavity in vacuum)."""
    n, m = spec.n_sites, cavity_dim(spec)
    vac = np.zeros((m, m))
    vac[0, 0] = 1
    p0 = np.kron(np.eye(2**n), vac)
    t = s.t
    if s.family == "TwoPointTOC":
        u = unitary(spec, 0, t)
        v, w = _op(spec, s.v_axis, s.site_x), _op(spec, s.w_axis, s.site_xp)
        return np.trace(p0 @ u.conj().T @ v @ u @ w).real / 2**n
    if s.family == "AutoTOC":
        mm, v = unitary(spec, 0, t), _probe_v(spec, s.v_axis)
    elif s.family in ("PerturbedTOC", "GlobalTOC"):
        if s.family == "PerturbedTOC":
            w = np.eye(p0.shape[0]) if s.site_x is None else _op(spec, s.w_axis, s.site_x)
        else:
            w = _rotation(spec, s.w_axis, s.phi)
        mm = unitary(spec, t / 2, t) @ w @ unitary(spec, 0, t / 2)
        v = _probe_v(spec, s.v_axis)
    elif s.family in ("LocalOTOC", "GlobalOTOC"):
        w = _op(spec, "Z", s.site_x) if s.family == "LocalOTOC" else _rotation(spec, s.w_axis, s.phi)
        mm = unitary(spec, 0, t, "backward") @ w @ unitary(spec, 0, t)
        v = _probe_v(spec, "Z")
    elif s.family == "TwoPointOTOC":
        mm = unitary(spec, 0, t, "backward") @ _op(spec, "Z", s.site_xp) @ unitary(spec, 0, t)
        v = _op(spec, "Z", s.site_x)
        return np.trace(p0 @ mm.conj().T @ v @ mm @ v).real / 2**n
    else:
        raise ValueError(s.family)
    return np.trace(p0 @ mm.conj().T @ v @ mm @ v).real / 2**n


def disjoint_otoc(v, n):
    """Dense trace ``tr[(1 x |0><0|) V^dag X_1 V |0><0| V^dag X_1 V]``."""
    d = 2**n
    half = 2 ** (n // 2)
    proj = np.kron(np.eye(half), np.diag([1.0] + [0.0] * (half - 1)))
    x1 = site_op(X, 0, n)
    rho = np.zeros((d, d))
    rho[0, 0] = 1
    a = v.conj().T @ x1 @ v
    return np.trace(proj @ a @ rho @ a.conj().T).real
