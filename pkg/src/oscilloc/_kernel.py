"""Compiled EMT network kernel.

Single combined ODE system in per-unit: shunt-capacitor buses, RL branches,
Thevenin sources (with an optional second, non-fundamental voltage
component), constant balanced current injections, and averaged-model VSCs
with double-PI control, SRF-PLL, saturation limiters (conditional-
integration anti-windup), a first-order modulation lag, and a DC chopper
guard.  Fixed-step explicit RK4.

State layout: ``[bus v_abc | branch i_abc | source i_abc | per-VSC block]``
with the 13-state VSC block
``[i_a i_b i_c v_dc x5 x6 x7 x8 theta_p pll_xi v_mf e_pd e_pq]``.
"""

import numpy as np
from numba import njit

WB = 2.0 * np.pi * 50.0

# vsc parameter row indices
VP_BUS = 0
VP_RAC = 1
VP_LS = 2
VP_CS = 3
VP_KPVD = 4
VP_KIVD = 5
VP_KPVQ = 6
VP_KIVQ = 7
VP_KPI = 8
VP_KII = 9
VP_WL = 10
VP_DVL = 11
VP_DCL = 12
VP_DPWM = 13
VP_VDCREF = 14
VP_VREF = 15
VP_PLLKP = 16
VP_PLLKI = 17
VP_TVM = 18
VP_TPWM = 19
VP_GCH = 20
VP_NP = 21

NV_STATES = 13

S23 = np.sqrt(2.0 / 3.0)
TWO_PI_3 = 2.0943951023931953


@njit(cache=True)
def park(a, b, c, th):
    ct = np.cos(th)
    st = np.sin(th)
    ct2 = np.cos(th - TWO_PI_3)
    st2 = np.sin(th - TWO_PI_3)
    ct3 = np.cos(th + TWO_PI_3)
    st3 = np.sin(th + TWO_PI_3)
    d = S23 * (ct * a + ct2 * b + ct3 * c)
    q = S23 * (-st * a - st2 * b - st3 * c)
    return d, q


@njit(cache=True)
def ipark(d, q, th):
    ct = np.cos(th)
    st = np.sin(th)
    ct2 = np.cos(th - TWO_PI_3)
    st2 = np.sin(th - TWO_PI_3)
    ct3 = np.cos(th + TWO_PI_3)
    st3 = np.sin(th + TWO_PI_3)
    a = S23 * (ct * d - st * q)
    b = S23 * (ct2 * d - st2 * q)
    c = S23 * (ct3 * d - st3 * q)
    return a, b, c


@njit(cache=True)
def deriv(t, x, busB, busG, bf, bt, bR, bX, sbus, sE, sPh, sR, sX,
          sEh, sWh, sPhh, jbus, jI, jPh, vp, dx, inj):
    nb = busB.shape[0]
    nbr = bf.shape[0]
    ns = sbus.shape[0]
    nv = vp.shape[0]
    nj = jbus.shape[0]
    for i in range(nb * 3):
        inj[i] = 0.0
    ofs_br = nb * 3
    ofs_s = ofs_br + nbr * 3
    ofs_v = ofs_s + ns * 3
    # RL branches
    for k in range(nbr):
        f = bf[k]
        tt = bt[k]
        for p in range(3):
            iL = x[ofs_br + 3 * k + p]
            dx[ofs_br + 3 * k + p] = (WB / bX[k]) * (x[3 * f + p] - x[3 * tt + p] - bR[k] * iL)
            inj[3 * f + p] -= iL
            inj[3 * tt + p] += iL
    # Thevenin sources (fundamental plus optional second component)
    for k in range(ns):
        bb = sbus[k]
        for p in range(3):
            e = sE[k] * np.cos(WB * t + sPh[k] - p * TWO_PI_3)
            if sEh[k] != 0.0:
                e += sEh[k] * np.cos(sWh[k] * t + sPhh[k] - p * TWO_PI_3)
            iL = x[ofs_s + 3 * k + p]
            dx[ofs_s + 3 * k + p] = (WB / sX[k]) * (e - x[3 * bb + p] - sR[k] * iL)
            inj[3 * bb + p] += iL
    # constant balanced current injections
    for k in range(nj):
        bb = jbus[k]
        for p in range(3):
            inj[3 * bb + p] += jI[k] * np.cos(WB * t + jPh[k] - p * TWO_PI_3)
    # VSCs
    for k in range(nv):
        o = ofs_v + NV_STATES * k
        bb = int(vp[k, VP_BUS])
        ia = x[o]
        ib_ = x[o + 1]
        ic = x[o + 2]
        vdc = x[o + 3]
        x5 = x[o + 4]
        x6 = x[o + 5]
        x7 = x[o + 6]
        x8 = x[o + 7]
        thp = x[o + 8]
        pxi = x[o + 9]
        vmf = x[o + 10]
        epd = x[o + 11]
        epq = x[o + 12]
        va = x[3 * bb]
        vb = x[3 * bb + 1]
        vc = x[3 * bb + 2]
        vd, vq = park(va, vb, vc, thp)
        id_, iq = park(ia, ib_, ic, thp)
        # SRF-PLL
        vqn = vq / max(abs(vd), 0.2)
        dthp = WB + vp[k, VP_PLLKP] * vqn + pxi
        dpxi = vp[k, VP_PLLKI] * vqn
        # outer loops with reactive-priority current limiting
        dvl = vp[k, VP_DVL]
        vmag = np.sqrt(vd * vd + vq * vq) * S23
        eq_err = vp[k, VP_VREF] - vmf
        iqref = -(vp[k, VP_KPVQ] * eq_err + vp[k, VP_KIVQ] * x6)
        satq = False
        if iqref > dvl:
            iqref = dvl
            satq = True
        elif iqref < -dvl:
            iqref = -dvl
            satq = True
        ed_err = vp[k, VP_VDCREF] - vdc
        idref = -(vp[k, VP_KPVD] * ed_err + vp[k, VP_KIVD] * x5)
        hd = dvl * dvl - iqref * iqref
        hd = np.sqrt(hd) if hd > 0.0 else 0.0
        dlim = hd if hd > 0.05 * dvl else 0.05 * dvl
        satd = False
        if idref > dlim:
            idref = dlim
            satd = True
        elif idref < -dlim:
            idref = -dlim
            satd = True
        # inner current loop with decoupling feedforward
        e7 = idref - id_
        e8 = iqref - iq
        sd = vp[k, VP_KPI] * e7 + vp[k, VP_KII] * x7
        sq = vp[k, VP_KPI] * e8 + vp[k, VP_KII] * x8
        edref = vd - vp[k, VP_WL] * iqref + sd
        eqref = vq + vp[k, VP_WL] * idref + sq
        dcl = vp[k, VP_DCL]
        satcd = False
        satcq = False
        emag = np.sqrt(edref * edref + eqref * eqref)
        if emag > dcl:
            sc = dcl / emag
            edref *= sc
            eqref *= sc
            satcd = True
            satcq = True
        # modulation inertia lag
        tpwm = vp[k, VP_TPWM]
        if tpwm > 0.0:
            dx[o + 11] = (edref - epd) / tpwm
            dx[o + 12] = (eqref - epq) / tpwm
            emd = epd
            emq = epq
        else:
            dx[o + 11] = 0.0
            dx[o + 12] = 0.0
            emd = edref
            emq = eqref
        # modulation with circular clip
        vdc_s = vdc if vdc > 0.2 else 0.2
        md = emd / vdc_s
        mq = emq / vdc_s
        dpwm = vp[k, VP_DPWM]
        mmag = np.sqrt(md * md + mq * mq)
        if mmag > dpwm:
            sc = dpwm / mmag
            md *= sc
            mq *= sc
            satcd = True
            satcq = True
        Ta, Tb, Tc = ipark(md, mq, thp)
        ea = Ta * vdc
        eb = Tb * vdc
        ec = Tc * vdc
        Ls = vp[k, VP_LS]
        Rac = vp[k, VP_RAC]
        Cs = vp[k, VP_CS]
        dx[o] = (ea - va - Rac * ia) / Ls
        dx[o + 1] = (eb - vb - Rac * ib_) / Ls
        dx[o + 2] = (ec - vc - Rac * ic) / Ls
        # DC chopper guard (emergency only)
        ich = 0.0
        vch = 3.0 * vp[k, VP_VDCREF]
        if vdc > vch:
            ich = vp[k, VP_GCH] * (vdc - vch)
        dx[o + 3] = (-(Ta * ia + Tb * ib_ + Tc * ic) - ich) / Cs
        # conditional integration (freeze on saturation)
        dx[o + 4] = 0.0 if satd else ed_err
        dx[o + 5] = 0.0 if satq else eq_err
        dx[o + 6] = 0.0 if satcd else e7
        dx[o + 7] = 0.0 if satcq else e8
        dx[o + 8] = dthp
        dx[o + 9] = dpxi
        dx[o + 10] = (vmag - vmf) / vp[k, VP_TVM]
        inj[3 * bb] += ia
        inj[3 * bb + 1] += ib_
        inj[3 * bb + 2] += ic
    # bus shunt capacitors
    for bbi in range(nb):
        for p in range(3):
            dx[3 * bbi + p] = (WB / busB[bbi]) * (inj[3 * bbi + p] - busG[bbi] * x[3 * bbi + p])
    return dx


@njit(cache=True)
def run(x0, t0, t1, dt, busB, busG, bf, bt, bR, bX, sbus, sE, sPh, sR, sX,
        sEh, sWh, sPhh, jbus, jI, jPh, vp, rec_every, recbuf, ceiling, i0=0):
    """Integrate from t0 to t1 with fixed-step RK4.

    Records ``[t, x...]`` rows into ``recbuf`` every ``rec_every`` steps,
    counting steps from the global offset ``i0`` so recording stays on one
    uniform grid across event segments.  Returns ``(x, rows_recorded,
    t_diverged)`` where ``t_diverged`` is the time at which any state
    magnitude exceeded ``ceiling`` (-1.0 if none).
    """
    n = int(round((t1 - t0) / dt))
    x = x0.copy()
    nx = x.shape[0]
    dxa = np.empty(nx)
    dxb = np.empty(nx)
    dxc = np.empty(nx)
    dxd = np.empty(nx)
    inj = np.empty(3 * busB.shape[0])
    ri = 0
    t = t0
    for i in range(n):
        k1 = deriv(t, x, busB, busG, bf, bt, bR, bX, sbus, sE, sPh, sR, sX,
                   sEh, sWh, sPhh, jbus, jI, jPh, vp, dxa, inj)
        k2 = deriv(t + 0.5 * dt, x + 0.5 * dt * k1, busB, busG, bf, bt, bR, bX,
                   sbus, sE, sPh, sR, sX, sEh, sWh, sPhh, jbus, jI, jPh, vp, dxb, inj)
        k3 = deriv(t + 0.5 * dt, x + 0.5 * dt * k2, busB, busG, bf, bt, bR, bX,
                   sbus, sE, sPh, sR, sX, sEh, sWh, sPhh, jbus, jI, jPh, vp, dxc, inj)
        k4 = deriv(t + dt, x + dt * k3, busB, busG, bf, bt, bR, bX,
                   sbus, sE, sPh, sR, sX, sEh, sWh, sPhh, jbus, jI, jPh, vp, dxd, inj)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t0 + (i + 1) * dt
        if (i0 + i + 1) % rec_every == 0:
            recbuf[ri, 0] = t
            recbuf[ri, 1:] = x
            ri += 1
        if (i + 1) % 200 == 0 or i == n - 1:
            for j in range(nx):
                if not np.isfinite(x[j]) or np.abs(x[j]) > ceiling:
                    return x, ri, t
    return x, ri, -1.0
