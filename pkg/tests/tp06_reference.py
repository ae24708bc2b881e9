"""Vectorised numpy reference for the ten Tusscher-Panfilov rates and current.

Independent of the compiled kernels in ``cardiofem.ionic.ten_tusscher``; used
only as a second route in the tests.
"""
from __future__ import annotations

import numpy as np

from cardiofem.ionic.base import CellModel, load_manifest

STATES = (
    "Xr1", "Xr2", "Xs", "m", "h", "j", "d", "f", "f2", "fCass",
    "s", "r", "Ca_i", "Ca_sr", "Ca_ss", "R_prime", "Na_i", "K_i",
)  # fmt: skip
(XR1, XR2, XS, M, H, J, D, F, F2, FCASS, S, R, CAI, CASR, CASS, RPRIME, NAI, KI) = range(len(STATES))

CELL_TYPES = ("epi", "endo", "mid")


def _sig(x):
    """1 / (1 + exp(x))"""
    return 1.0 / (1.0 + np.exp(x))


class ReferenceTenTusscherPanfilov(CellModel):
    name = "ten_tusscher_panfilov"
    state_names = STATES
    # cap for the slower states; the fast sodium activation gate m is limited
    # separately (its time constant shrinks without bound as V decreases)
    max_euler_dt = 2e-3
    quiescence_bound = 0.05

    def __init__(self, cell_type: str = "epi", **overrides):
        manifest = load_manifest("ten_tusscher_panfilov")
        if cell_type not in CELL_TYPES:
            raise ValueError(f"cell_type must be one of {CELL_TYPES}")
        base = dict(manifest["cell_types"][cell_type])
        base.update(overrides)
        self.cell_type = cell_type
        super().__init__(manifest, **base)

    def _currents(self, V, U):
        p = self.params
        RTF = p["R"] * p["T"] / p["F"]
        Ca_i, Ca_ss = U[:, CAI], U[:, CASS]
        Na_i, K_i = U[:, NAI], U[:, KI]

        E_K = RTF * np.log(p["K_o"] / K_i)
        E_Na = RTF * np.log(p["Na_o"] / Na_i)
        E_Ca = 0.5 * RTF * np.log(p["Ca_o"] / Ca_i)
        E_Ks = RTF * np.log((p["K_o"] + p["p_KNa"] * p["Na_o"]) / (K_i + p["p_KNa"] * Na_i))
        sqrt_ko = np.sqrt(p["K_o"] / 5.4)

        a_K1 = 0.1 / (1.0 + np.exp(0.06 * (V - E_K - 200.0)))
        b_K1 = (3.0 * np.exp(0.0002 * (V - E_K + 100.0)) + np.exp(0.1 * (V - E_K - 10.0))) / (
            1.0 + np.exp(-0.5 * (V - E_K))
        )
        i_K1 = p["g_K1"] * sqrt_ko * a_K1 / (a_K1 + b_K1) * (V - E_K)
        i_to = p["g_to"] * U[:, R] * U[:, S] * (V - E_K)
        i_Kr = p["g_Kr"] * sqrt_ko * U[:, XR1] * U[:, XR2] * (V - E_K)
        i_Ks = p["g_Ks"] * U[:, XS] ** 2 * (V - E_Ks)
        i_Na = p["g_Na"] * U[:, M] ** 3 * U[:, H] * U[:, J] * (V - E_Na)
        i_bNa = p["g_bNa"] * (V - E_Na)
        i_bCa = p["g_bCa"] * (V - E_Ca)
        i_pK = p["g_pK"] * (V - E_K) * _sig((25.0 - V) / 5.98)
        i_pCa = p["g_pCa"] * Ca_i / (Ca_i + p["K_pCa"])

        # GHK flux; (V-15)/(exp(x)-1) with x = 2(V-15)/RTF has a removable singularity at V = 15
        x = 2.0 * (V - 15.0) / RTF
        small = np.abs(x) < 1e-6
        xs = np.where(small, 1.0, x)
        ratio = np.where(small, 1.0 - 0.5 * x, xs / np.expm1(xs))  # x / (e^x - 1)
        i_CaL = (
            p["g_CaL"] * U[:, D] * U[:, F] * U[:, F2] * U[:, FCASS]
            * 2.0 * p["F"] * ratio
            * (0.25 * Ca_ss * np.exp(x) - p["Ca_o"])
        )  # fmt: skip

        VF = V / RTF
        i_NaK = (
            p["P_NaK"] * p["K_o"] / (p["K_o"] + p["K_mK"]) * Na_i / (Na_i + p["K_mNa"])
            / (1.0 + 0.1245 * np.exp(-0.1 * VF) + 0.0353 * np.exp(-VF))
        )  # fmt: skip
        g = p["gamma"]
        e_up, e_dn = np.exp(g * VF), np.exp((g - 1.0) * VF)
        i_NaCa = (
            p["k_NaCa"]
            * (e_up * Na_i**3 * p["Ca_o"] - e_dn * p["Na_o"] ** 3 * Ca_i * p["alpha"])
            / ((p["Km_Nai"] ** 3 + p["Na_o"] ** 3) * (p["Km_Ca"] + p["Ca_o"]) * (1.0 + p["k_sat"] * e_dn))
        )
        return dict(
            K1=i_K1, to=i_to, Kr=i_Kr, Ks=i_Ks, CaL=i_CaL, NaK=i_NaK, Na=i_Na,
            bNa=i_bNa, NaCa=i_NaCa, bCa=i_bCa, pK=i_pK, pCa=i_pCa,
        )  # fmt: skip

    @staticmethod
    def tau_m(V):
        a_m = _sig((-60.0 - V) / 5.0)
        b_m = 0.1 * _sig((V + 35.0) / 5.0) + 0.1 * _sig((V - 50.0) / 200.0)
        return a_m * b_m

    def euler_dt_limit(self, V, U):
        """``min(max_euler_dt, tau_m(V))``: a step no longer than tau keeps m in [0, 1]."""
        with np.errstate(over="ignore"):
            return np.minimum(self.max_euler_dt, self.tau_m(V))

    def current(self, V, U):
        c = self._currents(V, U)
        return (
            c["K1"] + c["to"] + c["Kr"] + c["Ks"] + c["CaL"] + c["NaK"]
            + c["Na"] + c["bNa"] + c["NaCa"] + c["bCa"] + c["pK"] + c["pCa"]
        )  # fmt: skip

    def rates(self, V, U):
        p = self.params
        dU = np.empty_like(U)

        def relax(idx, inf, tau):
            dU[:, idx] = (inf - U[:, idx]) / tau

        # fast sodium gates
        relax(M, _sig((-56.86 - V) / 9.03) ** 2, self.tau_m(V))
        hj_inf = _sig((V + 71.55) / 7.43) ** 2
        low = V < -40.0
        a_h = np.where(low, 0.057 * np.exp(-(V + 80.0) / 6.8), 0.0)
        b_h = np.where(
            low,
            2.7 * np.exp(0.079 * V) + 3.1e5 * np.exp(0.3485 * V),
            0.77 / (0.13 * (1.0 + np.exp(-(V + 10.66) / 11.1))),
        )
        relax(H, hj_inf, 1.0 / (a_h + b_h))
        a_j = np.where(
            low,
            (-25428.0 * np.exp(0.2444 * V) - 6.948e-6 * np.exp(-0.04391 * V))
            * (V + 37.78) / (1.0 + np.exp(0.311 * (V + 79.23))),
            0.0,
        )  # fmt: skip
        b_j = np.where(
            low,
            0.02424 * np.exp(-0.01052 * V) / (1.0 + np.exp(-0.1378 * (V + 40.14))),
            0.6 * np.exp(0.057 * V) / (1.0 + np.exp(-0.1 * (V + 32.0))),
        )
        relax(J, hj_inf, 1.0 / (a_j + b_j))

        # potassium gates
        relax(XR1, _sig((-26.0 - V) / 7.0), 450.0 * _sig((-45.0 - V) / 10.0) * 6.0 * _sig((V + 30.0) / 11.5))
        relax(XR2, _sig((V + 88.0) / 24.0), 3.0 * _sig((-60.0 - V) / 20.0) * 1.12 * _sig((V - 60.0) / 20.0))
        a_xs = 1400.0 / np.sqrt(1.0 + np.exp((5.0 - V) / 6.0))
        relax(XS, _sig((-5.0 - V) / 14.0), a_xs * _sig((V - 35.0) / 15.0) + 80.0)
        relax(R, _sig((20.0 - V) / 6.0), 9.5 * np.exp(-((V + 40.0) ** 2) / 1800.0) + 0.8)
        if self.cell_type == "endo":
            relax(S, _sig((V + 28.0) / 5.0), 1000.0 * np.exp(-((V + 67.0) ** 2) / 1000.0) + 8.0)
        else:
            tau_s = 85.0 * np.exp(-((V + 45.0) ** 2) / 320.0) + 5.0 * _sig((V - 20.0) / 5.0) + 3.0
            relax(S, _sig((V + 20.0) / 5.0), tau_s)

        # L-type calcium gates
        tau_d = (1.4 * _sig((-35.0 - V) / 13.0) + 0.25) * 1.4 * _sig((V + 5.0) / 5.0) + _sig((50.0 - V) / 20.0)
        relax(D, _sig((-8.0 - V) / 7.5), tau_d)
        tau_f = (
            1102.5 * np.exp(-((V + 27.0) ** 2) / 225.0)
            + 200.0 * _sig((13.0 - V) / 10.0)
            + 180.0 * _sig((V + 30.0) / 10.0)
            + 20.0
        )
        relax(F, _sig((V + 20.0) / 7.0), tau_f)
        tau_f2 = (
            562.0 * np.exp(-((V + 27.0) ** 2) / 240.0)
            + 31.0 * _sig((25.0 - V) / 10.0)
            + 80.0 * _sig((V + 30.0) / 10.0)
        )
        relax(F2, 0.67 * _sig((V + 35.0) / 7.0) + 0.33, tau_f2)
        Ca_ss = U[:, CASS]
        css = 1.0 / (1.0 + (Ca_ss / 0.05) ** 2)
        relax(FCASS, 0.6 * css + 0.4, 80.0 * css + 2.0)

        # calcium handling
        c = self._currents(V, U)
        Ca_i, Ca_sr, Rp = U[:, CAI], U[:, CASR], U[:, RPRIME]
        i_leak = p["V_leak"] * (Ca_sr - Ca_i)
        i_up = p["Vmax_up"] / (1.0 + p["K_up"] ** 2 / Ca_i**2)
        i_xfer = p["V_xfer"] * (Ca_ss - Ca_i)
        kcasr = p["max_sr"] - (p["max_sr"] - p["min_sr"]) / (1.0 + (p["EC"] / Ca_sr) ** 2)
        k1 = p["k1_prime"] / kcasr
        k2 = p["k2_prime"] * kcasr
        O = k1 * Ca_ss**2 * Rp / (p["k3"] + k1 * Ca_ss**2)
        i_rel = p["V_rel"] * O * (Ca_sr - Ca_ss)
        dU[:, RPRIME] = -k2 * Ca_ss * Rp + p["k4"] * (1.0 - Rp)

        cap_c = p["Cm"] / (p["V_c"] * p["F"])
        buf_i = 1.0 / (1.0 + p["Buf_c"] * p["K_buf_c"] / (Ca_i + p["K_buf_c"]) ** 2)
        buf_sr = 1.0 / (1.0 + p["Buf_sr"] * p["K_buf_sr"] / (Ca_sr + p["K_buf_sr"]) ** 2)
        buf_ss = 1.0 / (1.0 + p["Buf_ss"] * p["K_buf_ss"] / (Ca_ss + p["K_buf_ss"]) ** 2)
        dU[:, CAI] = buf_i * (
            -(c["bCa"] + c["pCa"] - 2.0 * c["NaCa"]) * 0.5 * cap_c
            + (i_leak - i_up) * p["V_sr"] / p["V_c"]
            + i_xfer
        )
        dU[:, CASR] = buf_sr * (i_up - i_rel - i_leak)
        dU[:, CASS] = buf_ss * (
            -c["CaL"] * p["Cm"] / (2.0 * p["V_ss"] * p["F"])
            + i_rel * p["V_sr"] / p["V_ss"]
            - i_xfer * p["V_c"] / p["V_ss"]
        )
        dU[:, NAI] = -(c["Na"] + c["bNa"] + 3.0 * c["NaK"] + 3.0 * c["NaCa"]) * cap_c
        dU[:, KI] = -(c["K1"] + c["to"] + c["Kr"] + c["Ks"] + c["pK"] - 2.0 * c["NaK"]) * cap_c
        return dU


def make_reference(cell_type: str = "epi", **overrides) -> ReferenceTenTusscherPanfilov:
    return ReferenceTenTusscherPanfilov(cell_type, **overrides)
