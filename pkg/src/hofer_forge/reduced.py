"""Extrema of the shortened generator on the reduced (z1, N) domain.

For the isolated-maximum scenario the generator at parameter u is

    Hbar_t(z) = K(z) + F(Phi_u(R_t^-1 z)),   K = h - b pi|z1|^2,
    F = -a pi|z1|^2 - N,

where R_t rotates z1 by exp(-2 pi i b t) and Phi_u is the family disjoiner.
Phi_u preserves N and its z1-component depends on (z1, N) only, so the
extrema over the model are extrema over {k1 pi|z1|^2 + N <= alpha}.
Since K is R_t-invariant, Hbar_t = Hbar_0 o R_t^-1 and R_t preserves the
model, so the extrema do not depend on t; they are computed once.

Three sources of values are combined, each a set of exact points of the
graph of Hbar_0 up to integration error:

* a forward polar grid in (z1, N), pushed through shared slit and push
  trajectories, plus the model boundary, where Phi_u is the identity;
* a backward grid of image points w near z1 = 0, where
  Hbar_0(Phi_u^-1 w) = h - b pi|Phi_u^-1(w)_1|^2 - a pi|w1|^2 - N;
* a pattern search from the best grid points.

The push stage is stiff inside its collars of width delta, and fixed-step
RK4 does not resolve every point.  Each integrated value is therefore
computed at full and half resolution; the RK4 error estimate
|full - half| / 15 must be below ``tol`` and the image must stay inside the
support bound pi|z1|^2 < outer_area(N), which the exact flow preserves.  The
rest are counted in ``diagnostics`` and left out.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .core import TWO_PI
from .disjoin import kernels
from .disjoin.cutoff import DEFAULT_CUTOFF
from .errors import ContainmentError, ExtremizerError

RHO = DEFAULT_CUTOFF
# |full - half| over the RK4 error at full resolution: 2^4 - 1
RICHARDSON = 15.0


class ReducedExtremizer:
    def __init__(self, scenario, disjoiner, u_values: Sequence[float], radii: int = 64, angles: int = 128,
                 n_main: int = 20, n_window: int = 3, backward_levels: int = 6, backward_angles: int = 32,
                 backward_n: int = 6, refine_iter: int = 16, refine_candidates: int = 3, tol: float = 1e-6):
        self.scenario = scenario
        self.disjoiner = disjoiner
        self.gen = gen = disjoiner.generator
        self.spec = spec = disjoiner.spec
        self.u_values = sorted({float(u) for u in u_values})
        self.tol = tol
        model = scenario.model
        self.k1, self.a, self.b = scenario.k1, scenario.a, scenario.b
        self.h, self.alpha = model.h_max, model.alpha
        self.lam, self.lam2 = gen.lam, spec.lam2
        self.eps, self.delta, self.T = gen.eps, gen.delta, gen.T
        self.slit_steps, self.push_steps = gen.slit_steps, gen.push_steps
        self.n_lo, self.n_hi = spec.window
        self.A_ref = max(float(gen.rescaled_A(0.0)), 1e-12)

        self.levels = model.alpha / self.k1 * np.linspace(0.0, 1.0, radii)
        theta = TWO_PI * np.arange(angles) / angles
        self.z1 = np.sqrt(self.levels / np.pi)[:, None] * np.exp(1j * theta)[None, :]
        self.main_N = np.linspace(0.0, self.n_lo, n_main + 1)
        self.window_N = self.n_lo + (self.n_hi - self.n_lo) * (np.arange(n_window) + 0.5) / n_window
        self.bw = (backward_levels, backward_angles, backward_n)
        self.refine_iter = refine_iter
        self.refine_candidates = refine_candidates

        self.best = {}   # u -> (max value, kind, (x, y, N))
        self.lowest = {}  # u -> min value
        self.diagnostics = {"grid": {"radii": radii, "angles": angles, "main_N": n_main + 1,
                                     "window_N": n_window},
                            "unresolved": {}, "sources": {}}
        self._forward_grid()
        self._boundary()
        for u in self.u_values:
            self._backward(u)
            self._window(u)
            self._refine(u)
        del self._slit_cache

    # -- stage parameters ------------------------------------------------------
    def stage(self, u, N):
        N = np.asarray(N, float)
        rv = np.asarray(self.gen.window(N)[0], float)
        d = rv * self.T * float(RHO.increasing(2.0 * min(u, 0.5)))
        r_u = float(RHO.increasing(2.0 * u - 1.0)) if u > 0.5 else 0.0
        return rv, d, np.asarray(self.gen.rescaled_A(N)) * r_u, r_u

    def moving(self, action, N):
        """Points that the disjoiner can move: inside the support bound for their N."""
        N = np.asarray(N, float)
        return (N < self.n_hi) & (np.asarray(action) < np.asarray(self.spec.outer_area(N)))

    def _record(self, u, values, kind, coords):
        if values.size == 0:
            return
        i = int(np.argmax(values))
        if u not in self.best or values[i] > self.best[u][0]:
            self.best[u] = (float(values[i]), kind, tuple(float(c) for c in coords[i]))
        self.lowest[u] = min(self.lowest.get(u, np.inf), float(values.min()))
        src = self.diagnostics["sources"].setdefault(u, {})
        src[kind] = max(src.get(kind, -np.inf), float(values[i]))

    def _unresolved(self, u, count, total):
        d = self.diagnostics["unresolved"].setdefault(u, [0, 0])
        d[0] += int(count)
        d[1] += int(total)

    # -- point maps at a chosen resolution ------------------------------------------
    def forward(self, z1, N, u, refine=1):
        """z1-component of Phi_u at (z1, N)."""
        z1 = np.asarray(z1, complex).ravel()
        N = np.broadcast_to(np.asarray(N, float), z1.shape)
        out = z1.copy()
        if u <= 0:
            return out
        mv = self.moving(np.pi * np.abs(z1) ** 2, N)
        if not np.any(mv):
            return out
        rv, d, tf, r_u = self.stage(u, N[mv])
        zeta = z1[mv] / self.lam
        steps = max(1, math.ceil(refine * self.slit_steps * float(np.max(d, initial=0.0)) / self.T))
        zeta = kernels.slit_flow(zeta, d, steps, self.eps)
        if r_u > 0:
            zeta = kernels.push_flow(zeta, 0.0, tf, rv, max(1, round(refine * self.push_steps)), self.eps, self.delta)
        out[mv] = self.lam * zeta
        return out

    def backward(self, w1, N, u, refine=1):
        """z1-component of Phi_u^-1 at (w1, N)."""
        w1 = np.asarray(w1, complex).ravel()
        N = np.broadcast_to(np.asarray(N, float), w1.shape)
        out = w1.copy()
        if u <= 0:
            return out
        mv = self.moving(np.pi * np.abs(w1) ** 2, N)
        if not np.any(mv):
            return out
        rv, d, tf, r_u = self.stage(u, N[mv])
        zeta = w1[mv] / self.lam
        if r_u > 0:
            zeta = kernels.push_flow(zeta, tf, 0.0, rv, max(1, round(refine * self.push_steps)), self.eps, self.delta)
        steps = max(1, math.ceil(refine * self.slit_steps * float(np.max(d, initial=0.0)) / self.T))
        zeta = kernels.slit_flow(zeta, -d, steps, self.eps)
        out[mv] = self.lam * zeta
        return out

    def value(self, z1, N, u, refine=1, with_image=False):
        phi = self.forward(z1, N, u, refine)
        v = self.h - self.b * np.pi * np.abs(z1) ** 2 - self.a * np.pi * np.abs(phi) ** 2 - N
        return (v, phi) if with_image else v

    def value_backward(self, w1, N, u, refine=1, with_image=False):
        pre = self.backward(w1, N, u, refine)
        v = self.h - self.b * np.pi * np.abs(pre) ** 2 - self.a * np.pi * np.abs(w1) ** 2 - N
        return (v, pre) if with_image else v

    def _accept(self, fine, coarse, image, N):
        inside = np.pi * np.abs(image) ** 2 <= np.asarray(self.spec.outer_area(N)) + 1e-12
        return inside & (np.abs(fine - coarse) <= RICHARDSON * self.tol)

    def _checked(self, fn, pts, N, u, refine=1):
        """Values at full and half resolution; NaN where not accepted."""
        fine, image = fn(pts, N, u, refine, with_image=True)
        coarse = fn(pts, N, u, 0.5 * refine)
        return np.where(self._accept(fine, coarse, image, N), fine, np.nan)

    # -- forward grid -----------------------------------------------------------
    def _forward_grid(self):
        lam, T = self.lam, self.T
        slit_rows = self.levels < self.spec.A1.intercept + self.spec.eps_bar
        push_rows = self.levels < float(self.spec.outer_area(0.0))
        rv_win = np.asarray(self.gen.window(self.window_N)[0], float)
        base = {u: T * float(RHO.increasing(2.0 * min(u, 0.5))) for u in self.u_values}
        r = {u: (float(RHO.increasing(2.0 * u - 1.0)) if u > 0.5 else 0.0) for u in self.u_values}
        A_main = np.asarray(self.gen.rescaled_A(self.main_N))
        A_win = np.asarray(self.gen.rescaled_A(self.window_N))
        zeta0 = (self.z1[slit_rows] / lam).ravel()
        shape_s = self.z1[slit_rows].shape
        shape_p = self.z1[push_rows].shape
        sub = slit_rows[push_rows]

        slit_times = sorted({d for d in base.values() if d > 0} | {rv * d for rv in rv_win for d in base.values()
                                                                    if rv * d > 0})
        push_times = sorted({float(A * r[u]) for u in self.u_values for A in A_main if A * r[u] > 0})

        def run(res):
            slit = {}
            if slit_times:
                snaps = kernels.slit_snapshots(zeta0, np.array(slit_times), T / (res * self.slit_steps), self.eps)
                slit = {t: snaps[k].reshape(shape_s) for k, t in enumerate(slit_times)}
            slit[0.0] = zeta0.reshape(shape_s)
            start = self.z1[push_rows] / lam
            if T in slit:
                start = start.copy()
                start[sub] = slit[T]
            push = {}
            if push_times:
                snaps = kernels.push_snapshots(start.ravel(), np.array(push_times),
                                               self.A_ref / (res * self.push_steps), self.eps, self.delta)
                push = {t: snaps[k].reshape(shape_p) for k, t in enumerate(push_times)}
            return slit, push

        fine, coarse = run(1.0), run(0.5)
        self._slit_cache = (fine[0], coarse[0], slit_rows, base, r)
        cap = self.alpha - self.k1 * self.levels
        for u in self.u_values:
            if u == 0:
                continue
            vals, coords = [], []

            def add(phi_f, phi_c, rows, N):
                z = self.z1[rows]
                lv = self.levels[rows]
                ok = (N <= cap[rows] + 1e-15)[:, None] & np.ones(z.shape, bool)
                if not np.any(ok):
                    return
                vf = self.h - self.b * lv[:, None] - self.a * np.pi * np.abs(phi_f) ** 2 - N
                vc = self.h - self.b * lv[:, None] - self.a * np.pi * np.abs(phi_c) ** 2 - N
                good = ok & self._accept(vf, vc, phi_f, N)
                self._unresolved(u, np.sum(ok & ~good), np.sum(ok))
                vals.append(vf[good])
                coords.append(np.column_stack([z[good].real, z[good].imag, np.full(np.sum(good), N)]))

            for j, N in enumerate(self.main_N):
                mv = self.moving(self.levels, N)
                rows = push_rows & mv
                if not np.any(rows):
                    continue
                phis = []
                for slit, push in (fine, coarse):
                    if r[u] > 0 and A_main[j] * r[u] > 0:
                        zeta = push[float(A_main[j] * r[u])]
                    else:
                        zeta = self.z1[push_rows] / lam
                        zeta = zeta.copy()
                        zeta[sub] = slit[base[u]]
                    phis.append(lam * zeta[mv[push_rows]])
                add(phis[0], phis[1], rows, N)
            if vals:
                self._record(u, np.concatenate(vals), "forward", np.concatenate(coords))

    def _window(self, u, stride: int = 4):
        """Columns with 0 < rho_V < 1.

        Their values are at most h - b pi|z1|^2 - N, so only rows where that
        bound beats the current maximum can matter for it; those are
        evaluated on every angle.  Every ``stride``-th row and angle is
        evaluated as well, as a containment check on the minimum.
        """
        if u == 0:
            return
        fine, coarse, slit_rows, base, r = self._slit_cache
        lam = self.lam
        cap = self.alpha - self.k1 * self.levels
        rv_win = np.asarray(self.gen.window(self.window_N)[0], float)
        lv = self.levels[slit_rows]
        z = self.z1[slit_rows]
        idx_r = np.arange(z.shape[0])[:, None]
        idx_a = np.arange(z.shape[1])[None, :]
        vals, coords = [], []
        for i, N in enumerate(self.window_N):
            relevant = (self.h - self.b * lv - N > self.best[u][0])[:, None]
            sel = (relevant | ((idx_r % stride == 0) & (idx_a % stride == 0))) & (
                self.moving(lv, N) & (N <= cap[slit_rows] + 1e-15))[:, None]
            if not np.any(sel):
                continue
            phis = []
            for slit, res in ((fine, 1.0), (coarse, 0.5)):
                d = rv_win[i] * base[u]
                zeta = (slit[d] if d > 0 else slit[0.0])[sel]
                if r[u] > 0:
                    tf = float(self.gen.rescaled_A(N)) * r[u]
                    zeta = kernels.push_flow(zeta, 0.0, tf, rv_win[i], max(1, round(res * self.push_steps)),
                                             self.eps, self.delta)
                phis.append(lam * zeta)
            k_part = self.h - self.b * np.broadcast_to(lv[:, None], z.shape)[sel] - N
            vf = k_part - self.a * np.pi * np.abs(phis[0]) ** 2
            vc = k_part - self.a * np.pi * np.abs(phis[1]) ** 2
            good = self._accept(vf, vc, phis[0], N)
            self._unresolved(u, np.sum(~good), good.size)
            vals.append(vf[good])
            zg = z[sel][good]
            coords.append(np.column_stack([zg.real, zg.imag, np.full(zg.size, N)]))
        if vals:
            self._record(u, np.concatenate(vals), "window", np.concatenate(coords))

    def _boundary(self):
        """Fixed points: N = n_hi columns and the model boundary (checked outside the support)."""
        cap = self.alpha - self.k1 * self.levels
        if np.any(self.moving(self.levels, np.maximum(cap, 0.0))):
            raise ContainmentError("model boundary meets the support of the disjoiner")
        for u in self.u_values:
            vals, coords = [], []
            for N in (np.maximum(cap, 0.0), np.full(cap.shape, self.n_hi)):
                ok = N <= cap + 1e-15
                fixed = ok & ~self.moving(self.levels, N)
                v = self.h - self.b * self.levels - self.a * self.levels - N
                vals.append(v[fixed])
                coords.append(np.column_stack([np.sqrt(self.levels[fixed] / np.pi), np.zeros(np.sum(fixed)),
                                               N[fixed]]))
            # u = 0 is the undeformed generator: the interior maximum is at the origin
            if u == 0:
                vals.append(np.array([self.h]))
                coords.append(np.zeros((1, 3)))
            self._record(u, np.concatenate(vals), "exact", np.concatenate(coords))

    # -- backward grid near the origin of the image ----------------------------------
    def _backward(self, u):
        if u == 0:
            return
        levels, angles, nn = self.bw
        floor = self.best[u][0]
        n_top = min(self.n_hi, self.h - floor)
        if n_top <= 0:
            return
        w_top = min((self.h - floor) / self.a, self.alpha / self.k1)
        acts = w_top * (np.arange(levels) / max(levels - 1, 1)) ** 2
        theta = TWO_PI * np.arange(angles) / angles
        w = (np.sqrt(acts / np.pi)[:, None] * np.exp(1j * theta)[None, :]).ravel()
        Ns = np.linspace(0.0, n_top, nn)
        W = np.tile(w, nn)
        N = np.repeat(Ns, w.size)
        keep = (self.k1 * np.pi * np.abs(W) ** 2 + N <= self.alpha) & (
            self.h - self.a * np.pi * np.abs(W) ** 2 - N > floor)
        W, N = W[keep], N[keep]
        if W.size == 0:
            return
        v = self._checked(self.value_backward, W, N, u)
        good = np.isfinite(v)
        self._unresolved(u, np.sum(~good), v.size)
        self._record(u, v[good], "backward", np.column_stack([W[good].real, W[good].imag, N[good]]))

    # -- pattern search ----------------------------------------------------------
    def _refine(self, u):
        if u == 0 or self.refine_iter == 0:
            return
        kind = self.best[u][1]
        if kind == "exact":
            return
        fn = self.value if kind == "forward" else self.value_backward
        x = np.array(self.best[u][2])
        best = self.best[u][0]
        r_step = math.sqrt(self.levels[1] / np.pi)
        step = np.array([r_step, r_step, self.main_N[1] - self.main_N[0]]) / 2
        dirs = np.concatenate([np.eye(3), -np.eye(3)])
        for _ in range(self.refine_iter):
            trial = x[None, :] + dirs * step[None, :]
            z = trial[:, 0] + 1j * trial[:, 1]
            N = trial[:, 2]
            ok = (N >= 0) & (self.k1 * np.pi * np.abs(z) ** 2 + N <= self.alpha)
            v = np.full(len(trial), -np.inf)
            if np.any(ok):
                v[ok] = np.nan_to_num(self._checked(fn, z[ok], N[ok], u), nan=-np.inf)
            k = int(np.argmax(v))
            if v[k] > best:
                best, x = float(v[k]), trial[k]
            else:
                step = step / 2
        self._record(u, np.array([best]), kind + "+refined", x[None, :])

    # -- extremizer protocol ------------------------------------------------------
    def extrema_at_u(self, u, ts):
        if u not in self.best:
            raise ExtremizerError(f"no extrema computed for u = {u}")
        n = len(ts)
        return np.full(n, self.best[u][0]), np.full(n, self.lowest[u])

    def for_u(self, u):
        return _BoundExtremizer(self, float(u))


class _BoundExtremizer:
    def __init__(self, parent: ReducedExtremizer, u: float):
        self.parent = parent
        self.u = u

    def extrema(self, generator, ts, domain):
        return self.parent.extrema_at_u(self.u, ts)
