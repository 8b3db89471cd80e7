"""Sizing optimization: MMA with a primal-dual interior-point subsolver.

Two drivers sit on top of the general solver. solve_compliance_min finds the
stiffness-optimal density field under a volume cap; solve_bound_problem
maximizes a bound s that all selected load factors (macroscopic eigenvalues
and element-level cell predictions, depending on the variant) must exceed,
while compliance stays within a narrow band of a reference value and the
volume cap stays active. pareto_sweep repeats the bound problem along a
grid of compliance references to trace the stiffness/stability trade-off.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import macro

KKT_TOL = 1e-5
STEP_TOL = 1e-4


@dataclass
class OptResult:
    x: np.ndarray
    f0: float
    f: np.ndarray
    kkt: float
    iterations: int
    status: str
    history: list = field(default_factory=list)


class MMA:
    """Method of moving asymptotes (standard formulation).

    Minimize f0(x) s.t. fi(x) <= 0, lower <= x <= upper. Subproblems are
    solved with the primal-dual Newton method on the relaxed KKT system,
    with artificial elastic variables keeping them always feasible.
    """

    def __init__(self, n, lower, upper, move=0.05, asyinit=0.5, asyincr=1.2, asydecr=0.7):
        self.n = n
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.move = move
        self.asyinit = asyinit
        self.asyincr = asyincr
        self.asydecr = asydecr
        self.low = None
        self.upp = None
        self.xold1 = None
        self.xold2 = None
        self.c_art = 1000.0
        self._alpha = self.lower
        self._beta = self.upper

    def update(self, it, x, f0, df0, f, df):
        n = self.n
        xmami = np.maximum(self.upper - self.lower, 1e-12)
        if it <= 2 or self.xold2 is None:
            self.low = x - self.asyinit * xmami
            self.upp = x + self.asyinit * xmami
        else:
            zzz = (x - self.xold1) * (self.xold1 - self.xold2)
            gamma = np.ones(n)
            gamma[zzz > 0] = self.asyincr
            gamma[zzz < 0] = self.asydecr
            self.low = x - gamma * (self.xold1 - self.low)
            self.upp = x + gamma * (self.upp - self.xold1)
            self.low = np.clip(self.low, x - 10.0 * xmami, x - 0.01 * xmami)
            self.upp = np.clip(self.upp, x + 0.01 * xmami, x + 10.0 * xmami)
        move = self.move * xmami
        alpha = np.maximum.reduce([self.lower, self.low + 0.1 * (x - self.low), x - move])
        beta = np.minimum.reduce([self.upper, self.upp - 0.1 * (self.upp - x), x + move])

        ux = self.upp - x
        xl = x - self.low
        raa0 = 1e-5

        def pq(dg):
            gp = np.maximum(dg, 0.0)
            gm = np.maximum(-dg, 0.0)
            p = ux**2 * (1.001 * gp + 0.001 * gm + raa0 / xmami)
            q = xl**2 * (0.001 * gp + 1.001 * gm + raa0 / xmami)
            return p, q

        # the constraint count may vary between calls (active-set style
        # callers); only the design-space state persists across iterations
        m = df.shape[0]
        p0, q0 = pq(df0)
        P = np.empty((m, n))
        Q = np.empty((m, n))
        for i in range(m):
            P[i], Q[i] = pq(df[i])
        b = P @ (1.0 / ux) + Q @ (1.0 / xl) - f

        if m == 1:
            xnew, lam, xsi, eta = _subsolve_bisection(self.low, self.upp, alpha, beta, p0, q0, P, Q, b)
        else:
            xnew, lam, xsi, eta = _subsolve(self.low, self.upp, alpha, beta, p0, q0, P, Q, b, self.c_art)
        self.xold2 = self.xold1
        self.xold1 = x.copy()
        self._alpha = alpha
        self._beta = beta
        return xnew, (lam, xsi, eta)

    def kkt_residual(self, x, df0, f, df, duals):
        """Scaled KKT residual of the original problem at the iterate, using
        the constraint and box multipliers handed back by the subsolver. At a
        fixed point the subproblem approximation is gradient-exact, so this
        vanishes exactly when the true first-order conditions hold. Slack
        distances use the subproblem box: where a move limit rather than a
        true bound is active, the box multiplier inflates the stationarity
        term instead, so convergence is never declared early. If the caller's
        constraint set changed shape since the subproblem was formed, the
        residual is reported infinite (the active set has not settled)."""
        lam, xsi, eta = duals
        if df.shape[0] != lam.shape[0]:
            return float("inf")
        rex = df0 + df.T @ lam - xsi + eta
        rexsi = xsi * (x - self._alpha)
        reeta = eta * (self._beta - x)
        comp = lam * f
        feas = np.maximum(f, 0.0)
        scale = max(1.0, float(np.max(np.abs(df0))))
        parts = np.concatenate([rex / scale, rexsi / scale, reeta / scale, comp, feas])
        return float(np.linalg.norm(parts, np.inf))


def _subsolve_bisection(low, upp, alpha, beta, p0, q0, P, Q, b):
    """Dual bisection for a single-constraint subproblem.

    The Lagrangian minimizer is separable and closed-form; the dual function
    is concave with derivative equal to the constraint value at x(lam), so
    bisection on lam converges unconditionally.
    """
    p1, q1 = P[0], Q[0]

    def x_of(lam):
        plam = p0 + lam * p1
        qlam = q0 + lam * q1
        sp = np.sqrt(plam)
        sq = np.sqrt(qlam)
        return np.clip((low * sp + upp * sq) / (sp + sq), alpha, beta)

    def g_of(lam):
        x = x_of(lam)
        return float(p1 @ (1.0 / (upp - x)) + q1 @ (1.0 / (x - low)) - b[0])

    if g_of(0.0) <= 0.0:
        lam = 0.0
    else:
        lo, hi = 0.0, 1.0
        for _ in range(100):
            if g_of(hi) < 0.0:
                break
            hi *= 2.0
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if g_of(mid) > 0.0:
                lo = mid
            else:
                hi = mid
        lam = 0.5 * (lo + hi)
    x = x_of(lam)
    dpsi = (p0 + lam * p1) / (upp - x) ** 2 - (q0 + lam * q1) / (x - low) ** 2
    xsi = np.maximum(dpsi, 0.0)
    eta = np.maximum(-dpsi, 0.0)
    return x, np.array([lam]), xsi, eta


def _subsolve(low, upp, alpha, beta, p0, q0, P, Q, b, c_art, epsimin=1e-7):
    """Primal-dual Newton solve of the MMA subproblem.

    min sum(p0/(upp-x) + q0/(x-low)) + sum(c_art y + 0.5 y^2)
    s.t. P/(upp-x) + Q/(x-low) - b <= y, alpha <= x <= beta, y >= 0.
    Returns (x, lam). Follows the standard epsilon-continuation scheme.
    """
    m, n = P.shape
    x = 0.5 * (alpha + beta)
    y = np.ones(m)
    z = 1.0
    lam = np.ones(m)
    xsi = np.maximum(1.0, 1.0 / (x - alpha))
    eta = np.maximum(1.0, 1.0 / (beta - x))
    mu = np.maximum(1.0, 0.5 * c_art * np.ones(m))
    zet = 1.0
    s = np.ones(m)
    eps = 1.0
    a0 = 1.0
    a_vec = np.zeros(m)
    c_vec = np.full(m, c_art)
    d_vec = np.ones(m)

    def gradients(x):
        ux = upp - x
        xl = x - low
        plam = p0 + lam @ P
        qlam = q0 + lam @ Q
        g = P @ (1.0 / ux) + Q @ (1.0 / xl)
        dpsi = plam / ux**2 - qlam / xl**2
        return ux, xl, plam, qlam, g, dpsi

    it_total = 0
    while eps > epsimin:
        for _ in range(200):
            it_total += 1
            ux, xl, plam, qlam, g, dpsi = gradients(x)
            rex = dpsi - xsi + eta
            rey = c_vec + d_vec * y - mu - lam
            rez = a0 - zet - a_vec @ lam
            relam = g - a_vec * z - y + s - b
            rexsi = xsi * (x - alpha) - eps
            reeta = eta * (beta - x) - eps
            remu = mu * y - eps
            rezet = zet * z - eps
            res = lam * s - eps
            residu = np.concatenate([rex, rey, [rez], relam, rexsi, reeta, remu, [rezet], res])
            resinorm = np.linalg.norm(residu, np.inf)
            if resinorm < 0.9 * eps:
                break
            # Newton direction (condensed to dx, dlam)
            GG = P / ux[None, :] ** 2 - Q / xl[None, :] ** 2
            delx = dpsi - eps / (x - alpha) + eps / (beta - x)
            dely = c_vec + d_vec * y - lam - eps / y
            delz = a0 - a_vec @ lam - eps / z
            dellam = g - a_vec * z - y - b + eps / lam
            diagx = 2.0 * (plam / ux**3 + qlam / xl**3) + xsi / (x - alpha) + eta / (beta - x)
            diagy = d_vec + mu / y
            diaglam = s / lam
            diaglamyi = diaglam + 1.0 / diagy
            if m <= n:
                blam = dellam + dely / diagy - GG @ (delx / diagx)
                Alam = np.diag(diaglamyi) + (GG / diagx[None, :]) @ GG.T
                AA = np.zeros((m + 1, m + 1))
                AA[:m, :m] = Alam
                AA[:m, m] = a_vec
                AA[m, :m] = a_vec
                AA[m, m] = -zet / z
                sol = np.linalg.solve(AA, np.concatenate([blam, [delz]]))
                dlam = sol[:m]
                dz = sol[m]
                dx = -(delx + GG.T @ dlam) / diagx
            else:
                dellamyi = dellam + dely / diagy
                Axx = np.diag(diagx) + (GG / diaglamyi[:, None]).T @ GG
                azz = zet / z + a_vec @ (a_vec / diaglamyi)
                axz = -GG.T @ (a_vec / diaglamyi)
                bx = delx + GG.T @ (dellamyi / diaglamyi)
                bz = delz - a_vec @ (dellamyi / diaglamyi)
                AA = np.zeros((n + 1, n + 1))
                AA[:n, :n] = Axx
                AA[:n, n] = axz
                AA[n, :n] = axz
                AA[n, n] = azz
                sol = np.linalg.solve(AA, np.concatenate([-bx, [-bz]]))
                dx = sol[:n]
                dz = sol[n]
                dlam = (GG @ dx) / diaglamyi - dz * (a_vec / diaglamyi) + dellamyi / diaglamyi
            dy = -dely / diagy + dlam / diagy
            dxsi = -xsi + (eps - xsi * dx) / (x - alpha)
            deta = -eta + (eps + eta * dx) / (beta - x)
            dmu = -mu + (eps - mu * dy) / y
            dzet = -zet + (eps - zet * dz) / z
            ds = -s + (eps - s * dlam) / lam

            # step length: keep every positivity-constrained quantity
            # strictly positive (fraction-to-the-boundary with factor 1.01)
            ratios = [1.0]
            for v, dv in (
                (y, dy),
                (np.array([z]), np.array([dz])),
                (lam, dlam),
                (xsi, dxsi),
                (eta, deta),
                (mu, dmu),
                (np.array([zet]), np.array([dzet])),
                (s, ds),
                (x - alpha, dx),
                (beta - x, -dx),
            ):
                neg = dv < 0
                if np.any(neg):
                    ratios.append(float(np.max(-1.01 * dv[neg] / v[neg])))
            step = 1.0 / max(ratios)

            xold, yold, zold = x.copy(), y.copy(), z
            lamold, xsiold, etaold = lam.copy(), xsi.copy(), eta.copy()
            muold, zetold, sold = mu.copy(), zet, s.copy()
            ok = False
            for _ls in range(40):
                x = xold + step * dx
                y = yold + step * dy
                z = zold + step * dz
                lam = lamold + step * dlam
                xsi = xsiold + step * dxsi
                eta = etaold + step * deta
                mu = muold + step * dmu
                zet = zetold + step * dzet
                s = sold + step * ds
                ux, xl, plam, qlam, g, dpsi = gradients(x)
                rex = dpsi - xsi + eta
                rey = c_vec + d_vec * y - mu - lam
                rez = a0 - zet - a_vec @ lam
                relam = g - a_vec * z - y + s - b
                rexsi = xsi * (x - alpha) - eps
                reeta = eta * (beta - x) - eps
                remu = mu * y - eps
                rezet = zet * z - eps
                res_ = lam * s - eps
                newnorm = np.linalg.norm(
                    np.concatenate([rex, rey, [rez], relam, rexsi, reeta, remu, [rezet], res_]), np.inf
                )
                if newnorm < resinorm:
                    ok = True
                    break
                step *= 0.5
            if not ok:
                x, y, z = xold, yold, zold
                lam, xsi, eta = lamold, xsiold, etaold
                mu, zet, s = muold, zetold, sold
                break
        eps *= 0.1
    return x, lam, xsi, eta


def nlp_solve(
    funcs,
    x0,
    lower,
    upper,
    max_iter=300,
    move=0.05,
    kkt_tol=KKT_TOL,
    step_tol=STEP_TOL,
    callback=None,
):
    """Outer MMA loop.

    funcs(x) must return (f0, df0, f, df) with constraints f <= 0.
    Stops on the scaled KKT residual, on design stagnation, or at max_iter.
    """
    x = np.asarray(x0, dtype=float).copy()
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    f0, df0, f, df = funcs(x)
    mma = MMA(x.size, lower, upper, move=move)
    history = []
    status = "max_iter"
    kkt = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        xnew, duals = mma.update(it, x, f0, df0, f, df)
        step = float(np.max(np.abs(xnew - x)))
        x = xnew
        f0, df0, f, df = funcs(x)
        kkt = mma.kkt_residual(x, df0, f, df, duals)
        history.append({"it": it, "f0": float(f0), "max_g": float(np.max(f)) if f.size else 0.0, "kkt": kkt, "step": step})
        if callback is not None:
            callback(it, x, f0, f, kkt, step)
        if kkt <= kkt_tol:
            status = "kkt"
            break
        if step <= step_tol:
            status = "step"
            break
    return OptResult(x=x, f0=f0, f=f, kkt=kkt, iterations=it, status=status, history=history)


# ---------------------------------------------------------------------------
# drivers


@dataclass
class BoundSettings:
    n_macro_modes: int = 6
    micro_margin: float = 0.2      # active set: lam <= (1 + margin) * min lam
    compliance_band: float = 1e-4  # relative half-width of the c = c0 band
    move: float = 0.05
    max_iter: int = 300
    kkt_tol: float = KKT_TOL
    step_tol: float = STEP_TOL
    filter_threshold: float = 0.05


def solve_compliance_min(problem, volume_fraction, rho_min, x0=None, move=0.05, max_iter=300, callback=None):
    """Minimize compliance subject to the volume cap; densities in
    [rho_min, 1]. Returns (OptResult, final MacroState)."""
    M = problem.mesh.n_elements
    a = problem.areas / problem.volume_total
    x0 = np.full(M, volume_fraction) if x0 is None else np.asarray(x0, dtype=float)
    state_box = {}
    c_scale = {}

    def funcs(x):
        st = macro.analyze(problem, x, want_buckling=False)
        state_box["st"] = st
        if "c0" not in c_scale:
            c_scale["c0"] = max(abs(st.compliance), 1e-300)
        c0 = c_scale["c0"]
        f0 = st.compliance / c0
        df0 = macro.compliance_grad(problem, st) / c0
        g = np.array([float(a @ x) / volume_fraction - 1.0])
        dg = (a / volume_fraction)[None, :]
        return f0, df0, g, dg

    res = nlp_solve(
        funcs,
        x0,
        np.full(M, rho_min),
        np.ones(M),
        max_iter=max_iter,
        move=move,
        callback=callback,
    )
    return res, state_box["st"]


def _bound_funcs(problem, settings, c0, volume_fraction, rho_min, variant):
    """Constraint assembly for the bound problem; x = (rho, s)."""
    M = problem.mesh.n_elements
    a = problem.areas / problem.volume_total
    band = settings.compliance_band

    def funcs(xs):
        rho = xs[:-1]
        s = xs[-1]
        st = macro.analyze(
            problem,
            rho,
            n_modes=settings.n_macro_modes,
            want_buckling=variant in ("A", "C"),
            filter_threshold=settings.filter_threshold,
        )
        rows = []
        grads = []

        sref = max(abs(s), 1e-8)
        if variant in ("A", "C"):
            for l in range(len(st.lam_macro)):
                lam = st.lam_macro[l]
                g = (s - abs(lam)) / sref
                dlam = macro.macro_lf_grad(problem, st, l)
                drho = -np.sign(lam) * dlam / sref
                rows.append(g)
                grads.append(np.concatenate([drho, [1.0 / sref]]))
        if variant in ("B", "C"):
            lamI = st.lam_micro
            finite = np.isfinite(lamI)
            if np.any(finite):
                lmin = float(np.min(lamI[finite]))
                active = np.flatnonzero(finite & (lamI <= (1.0 + settings.micro_margin) * lmin))
                dmicro = macro.micro_lf_grad(problem, st, active)
                for n, e in enumerate(active):
                    rows.append((s - lamI[e]) / sref)
                    grads.append(np.concatenate([-dmicro[n] / sref, [1.0 / sref]]))
                inactive = finite & (lamI > (1.0 + settings.micro_margin) * lmin)
                if np.any(inactive):
                    # linear safety: the bound must not outrun elements that
                    # left the active set this iteration
                    cap = float(np.min(lamI[inactive]))
                    rows.append((s - cap) / sref)
                    grads.append(np.concatenate([np.zeros(M), [1.0 / sref]]))
        # compliance band
        dc = macro.compliance_grad(problem, st)
        rows.append((st.compliance - c0 * (1.0 + band)) / c0)
        grads.append(np.concatenate([dc / c0, [0.0]]))
        rows.append((c0 * (1.0 - band) - st.compliance) / c0)
        grads.append(np.concatenate([-dc / c0, [0.0]]))
        # volume
        rows.append(float(a @ rho) / volume_fraction - 1.0)
        grads.append(np.concatenate([a / volume_fraction, [0.0]]))

        f0 = -s
        df0 = np.zeros(M + 1)
        df0[-1] = -1.0
        return f0, df0, np.asarray(rows), np.vstack(grads), st

    return funcs


def solve_bound_problem(
    problem,
    c0,
    volume_fraction,
    rho_min,
    variant="C",
    settings=None,
    x0=None,
    s0=None,
    callback=None,
):
    """Maximize the worst load factor subject to a compliance band and the
    volume cap. variant: 'A' macro eigenvalues only, 'B' cell predictions
    only, 'C' both. Returns (OptResult, final MacroState)."""
    settings = settings or BoundSettings()
    M = problem.mesh.n_elements
    raw = _bound_funcs(problem, settings, c0, volume_fraction, rho_min, variant)
    state_box = {}

    def funcs(xs):
        f0, df0, f, df, st = raw(xs)
        state_box["st"] = st
        return f0, df0, f, df

    if x0 is None:
        x0 = np.full(M, volume_fraction)
    if s0 is None:
        st0 = macro.analyze(problem, x0, n_modes=settings.n_macro_modes, filter_threshold=settings.filter_threshold)
        cands = [np.abs(st0.lam_macro).min() if variant in ("A", "C") else np.inf]
        finite = np.isfinite(st0.lam_micro)
        if variant in ("B", "C") and np.any(finite):
            cands.append(float(np.min(st0.lam_micro[finite])))
        s0 = 0.9 * min(cands)
    xs0 = np.concatenate([x0, [s0]])
    lower = np.concatenate([np.full(M, rho_min), [0.0]])
    upper = np.concatenate([np.ones(M), [1e3 * max(s0, 1e-8)]])
    res = nlp_solve(
        funcs,
        xs0,
        lower,
        upper,
        max_iter=settings.max_iter,
        move=settings.move,
        kkt_tol=settings.kkt_tol,
        step_tol=settings.step_tol,
        callback=callback,
    )
    return res, state_box["st"]


@dataclass
class ParetoPoint:
    j: int
    c0: float
    c: float
    s: float
    min_macro_lf: float
    min_micro_lf: float
    min_rho: float
    iterations: int
    status: str
    rho: np.ndarray
    violation: float


def pareto_sweep(
    problem,
    n_points,
    volume_fraction,
    rho_min,
    variant="C",
    settings=None,
    callback=None,
):
    """Trace the compliance/stability front.

    The compliance anchors run from the volume-constrained minimum c* to the
    compliance c_X of the stability-optimal design found at the loosest
    anchor; point j uses c0_j = c* + j (c_X - c*) / (n-1). Each point warm
    starts from its predecessor. Monotonically nonincreasing bounds s* are
    expected; violations beyond 1e-6 are flagged on the point.
    """
    settings = settings or BoundSettings()
    comp_res, comp_state = solve_compliance_min(
        problem, volume_fraction, rho_min, move=settings.move, max_iter=settings.max_iter
    )
    c_star = comp_state.compliance

    # loosest anchor: maximize the bound with a wide-open compliance band
    wide = replace(settings, compliance_band=10.0)
    res_x, st_x = solve_bound_problem(
        problem,
        c_star,
        volume_fraction,
        rho_min,
        variant=variant,
        settings=wide,
        x0=comp_res.x.copy(),
        callback=None,
    )
    c_x = st_x.compliance
    if c_x < c_star:
        c_x = c_star * 1.5

    points = []
    x_warm = comp_res.x.copy()
    for j in range(n_points):
        c0 = c_star + (c_x - c_star) * j / max(n_points - 1, 1)
        res, st = solve_bound_problem(
            problem,
            c0,
            volume_fraction,
            rho_min,
            variant=variant,
            settings=settings,
            x0=x_warm,
            callback=None,
        )
        x_warm = res.x[:-1].copy()
        s = float(res.x[-1])
        finite = np.isfinite(st.lam_micro)
        pt = ParetoPoint(
            j=j,
            c0=float(c0),
            c=float(st.compliance),
            s=s,
            min_macro_lf=float(np.abs(st.lam_macro).min()) if np.all(np.isfinite(st.lam_macro)) else float("inf"),
            min_micro_lf=float(np.min(st.lam_micro[finite])) if np.any(finite) else float("inf"),
            min_rho=float(np.min(res.x[:-1])),
            iterations=res.iterations,
            status=res.status,
            rho=res.x[:-1].copy(),
            violation=float(max(0.0, np.max(res.f))) if res.f.size else 0.0,
        )
        points.append(pt)
        if callback is not None:
            callback(pt)
    return points, {"c_star": float(c_star), "c_x": float(c_x), "rho_cmin": comp_res.x}
