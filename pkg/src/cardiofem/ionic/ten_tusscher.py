"""ten Tusscher-Panfilov (2006) human ventricular myocyte model.

Equations follow the published model; constants and initial conditions are in
``manifests/ten_tusscher_panfilov.yaml``. Intracellular calcium buffering uses
the derivative (buffer-factor) form. The stimulus current is applied through
the tissue equation and is therefore absent from the K_i balance.

The per-node kernels are compiled with numba. The state update is forward
Euler at frozen V, multirate: all states advance with steps no longer than
``max_euler_dt``, while the sodium activation gate ``m`` -- whose time
constant ``tau_m = alpha_m * beta_m`` tends to zero as V decreases -- is
sub-stepped with steps no longer than ``tau_m(V)``. Its rate depends only on
V and m, so the fine steps need no other state.
"""
from __future__ import annotations

import math

import numba
import numpy as np

from .base import CellModel, load_manifest

STATES = (
    "Xr1", "Xr2", "Xs", "m", "h", "j", "d", "f", "f2", "fCass",
    "s", "r", "Ca_i", "Ca_sr", "Ca_ss", "R_prime", "Na_i", "K_i",
)  # fmt: skip
(XR1, XR2, XS, M, H, J, D, F, F2, FCASS, S, R, CAI, CASR, CASS, RPRIME, NAI, KI) = range(len(STATES))

# order in which parameters are handed to the compiled kernels
PARAM_NAMES = (
    "R", "T", "F", "Cm", "V_c", "V_sr", "V_ss", "K_o", "Na_o", "Ca_o",
    "g_Na", "g_K1", "g_to", "g_Kr", "g_Ks", "p_KNa", "g_CaL", "k_NaCa", "gamma", "Km_Ca",
    "Km_Nai", "k_sat", "alpha", "P_NaK", "K_mK", "K_mNa", "g_pK", "g_pCa", "K_pCa", "g_bNa",
    "g_bCa", "Vmax_up", "K_up", "V_rel", "k1_prime", "k2_prime", "k3", "k4", "EC", "max_sr",
    "min_sr", "V_leak", "V_xfer", "Buf_c", "K_buf_c", "Buf_sr", "K_buf_sr", "Buf_ss", "K_buf_ss",
)  # fmt: skip

CELL_TYPES = ("epi", "endo", "mid")

_jit = numba.njit(cache=True, error_model="numpy")


@_jit
def _sig(x):
    """1 / (1 + exp(x))"""
    return 1.0 / (1.0 + math.exp(x))


@_jit
def tau_m(V):
    return _sig((-60.0 - V) / 5.0) * (0.1 * _sig((V + 35.0) / 5.0) + 0.1 * _sig((V - 50.0) / 200.0))


@_jit
def m_inf(V):
    return _sig((-56.86 - V) / 9.03) ** 2


@_jit
def _currents(V, u, P):
    (R_, T_, F_, Cm, V_c, V_sr, V_ss, K_o, Na_o, Ca_o,
     g_Na, g_K1, g_to, g_Kr, g_Ks, p_KNa, g_CaL, k_NaCa, gamma, Km_Ca,
     Km_Nai, k_sat, alpha, P_NaK, K_mK, K_mNa, g_pK, g_pCa, K_pCa, g_bNa,
     g_bCa) = P[:31]  # fmt: skip
    RTF = R_ * T_ / F_
    Ca_i, Ca_ss, Na_i, K_i = u[CAI], u[CASS], u[NAI], u[KI]

    E_K = RTF * math.log(K_o / K_i)
    E_Na = RTF * math.log(Na_o / Na_i)
    E_Ca = 0.5 * RTF * math.log(Ca_o / Ca_i)
    E_Ks = RTF * math.log((K_o + p_KNa * Na_o) / (K_i + p_KNa * Na_i))
    sqrt_ko = math.sqrt(K_o / 5.4)

    a_K1 = 0.1 / (1.0 + math.exp(0.06 * (V - E_K - 200.0)))
    b_K1 = (3.0 * math.exp(0.0002 * (V - E_K + 100.0)) + math.exp(0.1 * (V - E_K - 10.0))) / (
        1.0 + math.exp(-0.5 * (V - E_K))
    )
    i_K1 = g_K1 * sqrt_ko * a_K1 / (a_K1 + b_K1) * (V - E_K)
    i_to = g_to * u[R] * u[S] * (V - E_K)
    i_Kr = g_Kr * sqrt_ko * u[XR1] * u[XR2] * (V - E_K)
    i_Ks = g_Ks * u[XS] ** 2 * (V - E_Ks)
    i_Na = g_Na * u[M] ** 3 * u[H] * u[J] * (V - E_Na)
    i_bNa = g_bNa * (V - E_Na)
    i_bCa = g_bCa * (V - E_Ca)
    i_pK = g_pK * (V - E_K) * _sig((25.0 - V) / 5.98)
    i_pCa = g_pCa * Ca_i / (Ca_i + K_pCa)

    # GHK flux with x = 2(V-15)F/RT; x/(e^x - 1) has a removable singularity at x = 0
    x = 2.0 * (V - 15.0) / RTF
    ratio = 1.0 - 0.5 * x if abs(x) < 1e-6 else x / math.expm1(x)
    i_CaL = g_CaL * u[D] * u[F] * u[F2] * u[FCASS] * 2.0 * F_ * ratio * (0.25 * Ca_ss * math.exp(x) - Ca_o)

    VF = V / RTF
    i_NaK = (
        P_NaK * K_o / (K_o + K_mK) * Na_i / (Na_i + K_mNa)
        / (1.0 + 0.1245 * math.exp(-0.1 * VF) + 0.0353 * math.exp(-VF))
    )  # fmt: skip
    e_up, e_dn = math.exp(gamma * VF), math.exp((gamma - 1.0) * VF)
    i_NaCa = (
        k_NaCa
        * (e_up * Na_i**3 * Ca_o - e_dn * Na_o**3 * Ca_i * alpha)
        / ((Km_Nai**3 + Na_o**3) * (Km_Ca + Ca_o) * (1.0 + k_sat * e_dn))
    )
    return i_K1, i_to, i_Kr, i_Ks, i_CaL, i_NaK, i_Na, i_bNa, i_NaCa, i_bCa, i_pK, i_pCa


@_jit
def _total_current(V, u, P):
    i_K1, i_to, i_Kr, i_Ks, i_CaL, i_NaK, i_Na, i_bNa, i_NaCa, i_bCa, i_pK, i_pCa = _currents(V, u, P)
    return i_K1 + i_to + i_Kr + i_Ks + i_CaL + i_NaK + i_Na + i_bNa + i_NaCa + i_bCa + i_pK + i_pCa


@_jit
def _rates(V, u, P, endo, out):
    """dU/dt for one cell, written to ``out``."""
    # fast sodium gates
    out[M] = (m_inf(V) - u[M]) / tau_m(V)
    hj_inf = _sig((V + 71.55) / 7.43) ** 2
    if V < -40.0:
        a_h = 0.057 * math.exp(-(V + 80.0) / 6.8)
        b_h = 2.7 * math.exp(0.079 * V) + 3.1e5 * math.exp(0.3485 * V)
        a_j = (
            (-25428.0 * math.exp(0.2444 * V) - 6.948e-6 * math.exp(-0.04391 * V))
            * (V + 37.78) / (1.0 + math.exp(0.311 * (V + 79.23)))
        )  # fmt: skip
        b_j = 0.02424 * math.exp(-0.01052 * V) / (1.0 + math.exp(-0.1378 * (V + 40.14)))
    else:
        a_h = 0.0
        b_h = 0.77 / (0.13 * (1.0 + math.exp(-(V + 10.66) / 11.1)))
        a_j = 0.0
        b_j = 0.6 * math.exp(0.057 * V) / (1.0 + math.exp(-0.1 * (V + 32.0)))
    out[H] = (hj_inf - u[H]) * (a_h + b_h)
    out[J] = (hj_inf - u[J]) * (a_j + b_j)

    # potassium gates
    tau_xr1 = 450.0 * _sig((-45.0 - V) / 10.0) * 6.0 * _sig((V + 30.0) / 11.5)
    out[XR1] = (_sig((-26.0 - V) / 7.0) - u[XR1]) / tau_xr1
    tau_xr2 = 3.0 * _sig((-60.0 - V) / 20.0) * 1.12 * _sig((V - 60.0) / 20.0)
    out[XR2] = (_sig((V + 88.0) / 24.0) - u[XR2]) / tau_xr2
    tau_xs = 1400.0 / math.sqrt(1.0 + math.exp((5.0 - V) / 6.0)) * _sig((V - 35.0) / 15.0) + 80.0
    out[XS] = (_sig((-5.0 - V) / 14.0) - u[XS]) / tau_xs
    tau_r = 9.5 * math.exp(-((V + 40.0) ** 2) / 1800.0) + 0.8
    out[R] = (_sig((20.0 - V) / 6.0) - u[R]) / tau_r
    if endo:
        s_inf = _sig((V + 28.0) / 5.0)
        tau_s = 1000.0 * math.exp(-((V + 67.0) ** 2) / 1000.0) + 8.0
    else:
        s_inf = _sig((V + 20.0) / 5.0)
        tau_s = 85.0 * math.exp(-((V + 45.0) ** 2) / 320.0) + 5.0 * _sig((V - 20.0) / 5.0) + 3.0
    out[S] = (s_inf - u[S]) / tau_s

    # L-type calcium gates
    tau_d = (1.4 * _sig((-35.0 - V) / 13.0) + 0.25) * 1.4 * _sig((V + 5.0) / 5.0) + _sig((50.0 - V) / 20.0)
    out[D] = (_sig((-8.0 - V) / 7.5) - u[D]) / tau_d
    tau_f = (
        1102.5 * math.exp(-((V + 27.0) ** 2) / 225.0)
        + 200.0 * _sig((13.0 - V) / 10.0)
        + 180.0 * _sig((V + 30.0) / 10.0)
        + 20.0
    )
    out[F] = (_sig((V + 20.0) / 7.0) - u[F]) / tau_f
    tau_f2 = (
        562.0 * math.exp(-((V + 27.0) ** 2) / 240.0)
        + 31.0 * _sig((25.0 - V) / 10.0)
        + 80.0 * _sig((V + 30.0) / 10.0)
    )
    out[F2] = (0.67 * _sig((V + 35.0) / 7.0) + 0.33 - u[F2]) / tau_f2
    Ca_ss = u[CASS]
    css = 1.0 / (1.0 + (Ca_ss / 0.05) ** 2)
    out[FCASS] = (0.6 * css + 0.4 - u[FCASS]) / (80.0 * css + 2.0)

    # calcium handling and ionic concentrations
    F_, Cm, V_c, V_sr, V_ss = P[2], P[3], P[4], P[5], P[6]
    (Vmax_up, K_up, V_rel, k1_prime, k2_prime, k3, k4, EC, max_sr,
     min_sr, V_leak, V_xfer, Buf_c, K_buf_c, Buf_sr, K_buf_sr, Buf_ss, K_buf_ss) = P[31:]  # fmt: skip
    i_K1, i_to, i_Kr, i_Ks, i_CaL, i_NaK, i_Na, i_bNa, i_NaCa, i_bCa, i_pK, i_pCa = _currents(V, u, P)
    Ca_i, Ca_sr, Rp = u[CAI], u[CASR], u[RPRIME]
    i_leak = V_leak * (Ca_sr - Ca_i)
    i_up = Vmax_up / (1.0 + K_up**2 / Ca_i**2)
    i_xfer = V_xfer * (Ca_ss - Ca_i)
    kcasr = max_sr - (max_sr - min_sr) / (1.0 + (EC / Ca_sr) ** 2)
    k1 = k1_prime / kcasr
    k2 = k2_prime * kcasr
    O = k1 * Ca_ss**2 * Rp / (k3 + k1 * Ca_ss**2)
    i_rel = V_rel * O * (Ca_sr - Ca_ss)
    out[RPRIME] = -k2 * Ca_ss * Rp + k4 * (1.0 - Rp)

    cap_c = Cm / (V_c * F_)
    buf_i = 1.0 / (1.0 + Buf_c * K_buf_c / (Ca_i + K_buf_c) ** 2)
    buf_sr = 1.0 / (1.0 + Buf_sr * K_buf_sr / (Ca_sr + K_buf_sr) ** 2)
    buf_ss = 1.0 / (1.0 + Buf_ss * K_buf_ss / (Ca_ss + K_buf_ss) ** 2)
    out[CAI] = buf_i * (-(i_bCa + i_pCa - 2.0 * i_NaCa) * 0.5 * cap_c + (i_leak - i_up) * V_sr / V_c + i_xfer)
    out[CASR] = buf_sr * (i_up - i_rel - i_leak)
    out[CASS] = buf_ss * (-i_CaL * Cm / (2.0 * V_ss * F_) + i_rel * V_sr / V_ss - i_xfer * V_c / V_ss)
    out[NAI] = -(i_Na + i_bNa + 3.0 * i_NaK + 3.0 * i_NaCa) * cap_c
    out[KI] = -(i_K1 + i_to + i_Kr + i_Ks + i_pK - 2.0 * i_NaK) * cap_c


@_jit
def _rates_nodes(V, U, P, endo):
    out = np.empty_like(U)
    for i in range(V.shape[0]):
        _rates(V[i], U[i], P, endo, out[i])
    return out


@_jit
def _current_nodes(V, U, P):
    out = np.empty_like(V)
    for i in range(V.shape[0]):
        out[i] = _total_current(V[i], U[i], P)
    return out


@_jit
def _advance_nodes(V, U, dt, P, endo, max_dt):
    out = U.copy()
    du = np.empty(U.shape[1])
    for i in range(V.shape[0]):
        v = V[i]
        u = out[i]
        n_slow = max(1, int(math.ceil(dt / max_dt - 1e-9)))
        big = dt / n_slow
        tm = tau_m(v)
        mi = m_inf(v)
        n_fast = max(1, int(math.ceil(big / tm - 1e-9)))
        small = big / n_fast
        for _ in range(n_slow):
            _rates(v, u, P, endo, du)
            m = u[M]
            for q in range(u.shape[0]):
                u[q] += big * du[q]
            for _ in range(n_fast):
                m += small * (mi - m) / tm
            u[M] = m
    return out


class TenTusscherPanfilov(CellModel):
    name = "ten_tusscher_panfilov"
    state_names = STATES
    # step cap for every state except m (limited by tau_m instead, see module docstring)
    max_euler_dt = 5e-3
    quiescence_bound = 0.05

    def __init__(self, cell_type: str = "epi", **overrides):
        manifest = load_manifest("ten_tusscher_panfilov")
        if cell_type not in CELL_TYPES:
            raise ValueError(f"cell_type must be one of {CELL_TYPES}")
        if tuple(manifest["parameters"]) != PARAM_NAMES:
            raise ValueError("parameter manifest does not match the kernel's parameter order")
        base = dict(manifest["cell_types"][cell_type])
        base.update(overrides)
        self.cell_type = cell_type
        super().__init__(manifest, **base)

    def _packed(self) -> np.ndarray:
        return np.array([self.params[k] for k in PARAM_NAMES])

    def _endo(self) -> bool:
        return self.cell_type == "endo"

    @staticmethod
    def tau_m(V):
        return np.vectorize(tau_m, otypes=[float])(V)

    def euler_dt_limit(self, V, U):
        """Forward-Euler step bound per node: ``min(max_euler_dt, tau_m(V))``."""
        return np.minimum(self.max_euler_dt, self.tau_m(V))

    def rates(self, V, U):
        V, U = np.ascontiguousarray(V, dtype=np.float64), np.ascontiguousarray(U, dtype=np.float64)
        return _rates_nodes(V, U, self._packed(), self._endo())

    def current(self, V, U):
        V, U = np.ascontiguousarray(V, dtype=np.float64), np.ascontiguousarray(U, dtype=np.float64)
        return _current_nodes(V, U, self._packed())

    def advance(self, V, U, dt):
        """Multirate forward-Euler update of every node over ``dt`` at frozen ``V``."""
        V, U = np.ascontiguousarray(V, dtype=np.float64), np.ascontiguousarray(U, dtype=np.float64)
        return _advance_nodes(V, U, float(dt), self._packed(), self._endo(), float(self.max_euler_dt))


def make_ten_tusscher_panfilov(cell_type: str = "epi", **overrides) -> TenTusscherPanfilov:
    return TenTusscherPanfilov(cell_type, **overrides)
