"""Binary probabilistic classifiers for the covariate-dependent split probabilities.

Two model kinds are supported, both trained full-batch on the penalized
cross-entropy (sum form)::

    sum_i softplus(z_i) - t_i z_i  +  l2 / 2 * ||weights||^2

where ``t_i = 1`` marks a point falling in the left child. Biases are not
penalized. Features are standardized with statistics of the training subset,
which are stored with the parameters.

Parameter layouts (flat vectors):

* logistic: ``[bias, w_1, ..., w_q]``
* mlp: for each layer ``l`` with sizes ``(n_in, n_out)``, the weight matrix in
  row-major ``(n_in, n_out)`` order followed by the ``n_out`` biases. Hidden
  layers use tanh, the output unit a sigmoid.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

P_MIN = 1e-6

LOGISTIC = 0
MLP = 1

DEFAULT_L2 = {"logistic": 1.0, "mlp": 1e-4}
DEFAULT_HIDDEN = (4, 4)


@dataclass(frozen=True)
class ClassifierKind:
    name: str = "logistic"
    hidden: tuple = ()

    def __post_init__(self):
        if self.name not in ("logistic", "mlp"):
            raise ValueError(f"unknown classifier kind {self.name!r}")
        hidden = tuple(int(h) for h in self.hidden)
        if self.name == "mlp" and not hidden:
            hidden = DEFAULT_HIDDEN
        if self.name == "logistic":
            hidden = ()
        if any(h <= 0 for h in hidden):
            raise ValueError("hidden sizes must be positive")
        object.__setattr__(self, "hidden", hidden)

    @classmethod
    def parse(cls, spec) -> "ClassifierKind":
        """Accepts ``"logistic"``, ``"mlp"``, ``"mlp(4,4)"`` or a ClassifierKind."""
        if isinstance(spec, ClassifierKind):
            return spec
        text = str(spec).strip().lower().replace(" ", "")
        if text.startswith("mlp(") and text.endswith(")"):
            inner = text[4:-1]
            hidden = tuple(int(v) for v in inner.split(",") if v)
            return cls("mlp", hidden)
        return cls(text)

    @property
    def code(self) -> int:
        return LOGISTIC if self.name == "logistic" else MLP

    def layer_sizes(self, q: int) -> np.ndarray:
        return np.array([q, *self.hidden, 1], dtype=np.int64)

    def n_params(self, q: int) -> int:
        if self.name == "logistic":
            return q + 1
        return mlp_n_params(self.layer_sizes(q))

    def __str__(self) -> str:
        if self.name == "logistic":
            return "logistic"
        return "mlp(" + ",".join(str(h) for h in self.hidden) + ")"


@dataclass
class ClassifierParams:
    kind: ClassifierKind
    weights: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    l2: float = field(default=1.0)

    def __post_init__(self):
        q = self.mean.shape[0]
        if self.weights.shape != (self.kind.n_params(q),):
            raise ValueError(
                f"{self.kind} with q={q} needs {self.kind.n_params(q)} weights, "
                f"got {self.weights.shape}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.mean))
                and np.all(np.isfinite(self.scale))):
            raise ValueError("classifier parameters must be finite")

    @property
    def q(self) -> int:
        return self.mean.shape[0]


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True, error_model="numpy")
def _softplus(z):
    if z > 0.0:
        return z + np.log1p(np.exp(-z))
    return np.log1p(np.exp(z))


@njit(cache=True, error_model="numpy")
def _sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


@njit(cache=True, error_model="numpy")
def _tanh(z):
    return 1.0 - 2.0 / (np.exp(2.0 * z) + 1.0)


@njit(cache=True, inline="always", error_model="numpy")
def _exp_neg(a):
    """exp(-a) for a >= 0 without libm calls, so callers' loops vectorize."""
    r = min(a, 40.0) * (-1.0 / 64.0)
    p = 1.0 / 87178291200.0
    p = p * r + 1.0 / 6227020800.0
    p = p * r + 1.0 / 479001600.0
    p = p * r + 1.0 / 39916800.0
    p = p * r + 1.0 / 3628800.0
    p = p * r + 1.0 / 362880.0
    p = p * r + 1.0 / 40320.0
    p = p * r + 1.0 / 5040.0
    p = p * r + 1.0 / 720.0
    p = p * r + 1.0 / 120.0
    p = p * r + 1.0 / 24.0
    p = p * r + 1.0 / 6.0
    p = p * r + 0.5
    p = p * r + 1.0
    p = p * r + 1.0
    p = p * p
    p = p * p
    p = p * p
    p = p * p
    p = p * p
    return p * p


@njit(cache=True, inline="always", error_model="numpy")
def _log1p_unit(e):
    """log(1 + e) for e in [0, 1] via 2 atanh(e / (2 + e))."""
    s = e / (2.0 + e)
    u = s * s
    p = 1.0 / 35.0
    for k in range(16, -1, -1):
        p = p * u + 1.0 / (2 * k + 1)
    return 2.0 * s * p


@njit(cache=True, fastmath=True, error_model="numpy")
def _tanh_inplace(z):
    # branch-free so the loop vectorizes: exp(2z) = exp(2z / 64) ** 64 with a
    # degree-14 Taylor polynomial; max abs error vs libm tanh ~1e-14
    for i in range(z.shape[0]):
        v = min(max(z[i], -20.0), 20.0)
        r = v * (2.0 / 64.0)
        p = 1.0 / 87178291200.0
        p = p * r + 1.0 / 6227020800.0
        p = p * r + 1.0 / 479001600.0
        p = p * r + 1.0 / 39916800.0
        p = p * r + 1.0 / 3628800.0
        p = p * r + 1.0 / 362880.0
        p = p * r + 1.0 / 40320.0
        p = p * r + 1.0 / 5040.0
        p = p * r + 1.0 / 720.0
        p = p * r + 1.0 / 120.0
        p = p * r + 1.0 / 24.0
        p = p * r + 1.0 / 6.0
        p = p * r + 0.5
        p = p * r + 1.0
        p = p * r + 1.0
        p = p * p
        p = p * p
        p = p * p
        p = p * p
        p = p * p
        p = p * p
        z[i] = 1.0 - 2.0 / (p + 1.0)


@njit(cache=True, error_model="numpy")
def standardize_stats(X):
    n, q = X.shape
    mean = np.zeros(q)
    scale = np.ones(q)
    if n == 0:
        return mean, scale
    for j in range(q):
        s = 0.0
        for i in range(n):
            s += X[i, j]
        m = s / n
        v = 0.0
        for i in range(n):
            v += (X[i, j] - m) ** 2
        sd = np.sqrt(v / n)
        mean[j] = m
        scale[j] = sd if sd > 1e-12 * max(1.0, abs(m)) else 1.0
    return mean, scale


@njit(cache=True, error_model="numpy")
def logistic_scores(w, Xs):
    n, q = Xs.shape
    z = np.empty(n)
    for i in range(n):
        s = w[0]
        for j in range(q):
            s += w[j + 1] * Xs[i, j]
        z[i] = s
    return z


@njit(cache=True, error_model="numpy")
def logistic_loss_grad(w, Xs, t, l2, grad):
    """Penalized negative log-likelihood; fills ``grad`` and returns the loss."""
    n, q = Xs.shape
    for k in range(q + 1):
        grad[k] = 0.0
    loss = 0.0
    for i in range(n):
        z = w[0]
        for j in range(q):
            z += w[j + 1] * Xs[i, j]
        loss += _softplus(z) - t[i] * z
        r = _sigmoid(z) - t[i]
        grad[0] += r
        for j in range(q):
            grad[j + 1] += r * Xs[i, j]
    for j in range(q):
        loss += 0.5 * l2 * w[j + 1] * w[j + 1]
        grad[j + 1] += l2 * w[j + 1]
    return loss


@njit(cache=True, error_model="numpy")
def _cholesky_solve(H, g):
    """Solve ``H x = g`` for SPD ``H`` (adds jitter when needed)."""
    m = H.shape[0]
    jitter = 0.0
    for attempt in range(8):
        L = np.zeros((m, m))
        ok = True
        for i in range(m):
            for j in range(i + 1):
                s = H[i, j]
                if i == j:
                    s += jitter
                for k in range(j):
                    s -= L[i, k] * L[j, k]
                if i == j:
                    if s <= 0.0:
                        ok = False
                        break
                    L[i, i] = np.sqrt(s)
                else:
                    L[i, j] = s / L[j, j]
            if not ok:
                break
        if ok:
            x = np.empty(m)
            for i in range(m):
                s = g[i]
                for k in range(i):
                    s -= L[i, k] * x[k]
                x[i] = s / L[i, i]
            for i in range(m - 1, -1, -1):
                s = x[i]
                for k in range(i + 1, m):
                    s -= L[k, i] * x[k]
                x[i] = s / L[i, i]
            return x
        d = 0.0
        for i in range(m):
            d = max(d, abs(H[i, i]))
        jitter = max(1e-12, jitter * 100.0, 1e-10 * d)
    return g.copy()


@njit(cache=True, error_model="numpy")
def _logistic_eval(w, Xs, t, l2, grad, H):
    """Loss, gradient and Hessian in one pass (one exp and one log1p per row)."""
    n, q = Xs.shape
    m = q + 1
    for k in range(m):
        grad[k] = 0.0
        for j in range(m):
            H[k, j] = 0.0
    loss = 0.0
    for i in range(n):
        z = w[0]
        for j in range(q):
            z += w[j + 1] * Xs[i, j]
        e = np.exp(-abs(z))
        if z >= 0.0:
            loss += z + np.log(1.0 + e) - t[i] * z
            p = 1.0 / (1.0 + e)
        else:
            loss += np.log(1.0 + e) - t[i] * z
            p = e / (1.0 + e)
        r = p - t[i]
        h = p * (1.0 - p)
        grad[0] += r
        H[0, 0] += h
        for j in range(q):
            xj = Xs[i, j]
            grad[j + 1] += r * xj
            hx = h * xj
            H[j + 1, 0] += hx
            for k in range(j + 1):
                H[j + 1, k + 1] += hx * Xs[i, k]
    for j in range(q):
        loss += 0.5 * l2 * w[j + 1] * w[j + 1]
        grad[j + 1] += l2 * w[j + 1]
        H[j + 1, j + 1] += l2
    for a in range(m):
        for b in range(a + 1, m):
            H[a, b] = H[b, a]
    return loss


@njit(cache=True, error_model="numpy")
def fit_logistic_nb(Xs, t, l2, max_iter, tol):
    """Damped Newton with Armijo backtracking. Returns ``(w, n_iter)``."""
    n, q = Xs.shape
    m = q + 1
    w = np.zeros(m)
    g = np.empty(m)
    g_new = np.empty(m)
    H = np.empty((m, m))
    H_new = np.empty((m, m))
    w_new = np.empty(m)
    f = _logistic_eval(w, Xs, t, l2, g, H)
    scale = max(1.0, float(n))
    it = 0
    for it in range(max_iter):
        gmax = 0.0
        for k in range(m):
            gmax = max(gmax, abs(g[k]))
        if gmax / scale <= tol:
            break
        step = _cholesky_solve(H, g)
        slope = 0.0
        for k in range(m):
            slope -= g[k] * step[k]
        if slope >= 0.0:
            for k in range(m):
                step[k] = g[k]
            slope = 0.0
            for k in range(m):
                slope -= g[k] * g[k]
        alpha = 1.0
        accepted = False
        f_new = f
        for _ in range(50):
            for k in range(m):
                w_new[k] = w[k] - alpha * step[k]
            f_new = _logistic_eval(w_new, Xs, t, l2, g_new, H_new)
            if f_new <= f + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        decrease = f - f_new
        w[:] = w_new
        g[:] = g_new
        H[:, :] = H_new
        f = f_new
        if decrease <= 1e-15 * max(1.0, abs(f)):
            break
    return w, it


@njit(cache=True, error_model="numpy")
def mlp_n_params(sizes):
    total = 0
    for l in range(sizes.shape[0] - 1):
        total += sizes[l] * sizes[l + 1] + sizes[l + 1]
    return total


@njit(cache=True, error_model="numpy")
def mlp_penalty_mask(sizes):
    mask = np.zeros(mlp_n_params(sizes))
    off = 0
    for l in range(sizes.shape[0] - 1):
        nw = sizes[l] * sizes[l + 1]
        mask[off:off + nw] = 1.0
        off += nw + sizes[l + 1]
    return mask


@njit(cache=True, error_model="numpy")
def _mlp_workspace(XsT, sizes):
    """Unit-major activation buffers ``(layer, unit, sample)``; layer 0 holds the inputs."""
    n = XsT.shape[1]
    maxw = 0
    for l in range(sizes.shape[0]):
        maxw = max(maxw, sizes[l])
    acts = np.zeros((sizes.shape[0], maxw, n))
    for k in range(sizes[0]):
        for i in range(n):
            acts[0, k, i] = XsT[k, i]
    return acts, np.zeros((maxw, n)), np.zeros((maxw, n))


@njit(cache=True, fastmath={"reassoc", "contract"}, error_model="numpy")
def _mlp_forward(w, sizes, acts):
    n = acts.shape[2]
    n_layers = sizes.shape[0] - 1
    off = 0
    for l in range(n_layers):
        n_in = sizes[l]
        n_out = sizes[l + 1]
        boff = off + n_in * n_out
        for o in range(n_out):
            z = acts[l + 1, o]
            bias = w[boff + o]
            for i in range(n):
                z[i] = bias
            for k in range(n_in):
                wk = w[off + k * n_out + o]
                a = acts[l, k]
                for i in range(n):
                    z[i] += a[i] * wk
            if l < n_layers - 1:
                _tanh_inplace(z)
        off = boff + n_out
    return acts[n_layers, 0]


@njit(cache=True, fastmath={"reassoc", "contract"}, error_model="numpy")
def _mlp_loss_grad_ws(w, t, sizes, l2, grad, acts, delta, delta2):
    n = acts.shape[2]
    n_layers = sizes.shape[0] - 1
    out = _mlp_forward(w, sizes, acts)
    for k in range(grad.shape[0]):
        grad[k] = 0.0
    loss = 0.0
    d0 = delta[0]
    for i in range(n):
        z = out[i]
        e = _exp_neg(abs(z))
        loss += max(z, 0.0) + _log1p_unit(e) - t[i] * z
        d0[i] = (1.0 if z >= 0.0 else e) / (1.0 + e) - t[i]
    off = mlp_n_params(sizes)
    for l in range(n_layers - 1, -1, -1):
        n_in = sizes[l]
        n_out = sizes[l + 1]
        off -= n_in * n_out + n_out
        boff = off + n_in * n_out
        for o in range(n_out):
            dv = delta[o]
            s = 0.0
            for i in range(n):
                s += dv[i]
            grad[boff + o] += s
            for k in range(n_in):
                a = acts[l, k]
                s = 0.0
                for i in range(n):
                    s += a[i] * dv[i]
                grad[off + k * n_out + o] += s
        if l > 0:
            for k in range(n_in):
                nd = delta2[k]
                for i in range(n):
                    nd[i] = 0.0
                for o in range(n_out):
                    wk = w[off + k * n_out + o]
                    dv = delta[o]
                    for i in range(n):
                        nd[i] += dv[i] * wk
                a = acts[l, k]
                for i in range(n):
                    nd[i] *= 1.0 - a[i] * a[i]
            delta, delta2 = delta2, delta
    off = 0
    for l in range(n_layers):
        nw = sizes[l] * sizes[l + 1]
        for k in range(off, off + nw):
            loss += 0.5 * l2 * w[k] * w[k]
            grad[k] += l2 * w[k]
        off += nw + sizes[l + 1]
    return loss


@njit(cache=True, error_model="numpy")
def mlp_scores(w, Xs, sizes):
    acts, _, _ = _mlp_workspace(np.ascontiguousarray(Xs.T), sizes)
    return _mlp_forward(w, sizes, acts).copy()


@njit(cache=True, error_model="numpy")
def mlp_loss_grad(w, Xs, t, sizes, l2, grad):
    acts, delta, delta2 = _mlp_workspace(np.ascontiguousarray(Xs.T), sizes)
    return _mlp_loss_grad_ws(w, t, sizes, l2, grad, acts, delta, delta2)


@njit(cache=True, error_model="numpy")
def fit_mlp_nb(Xs, t, sizes, l2, w0, max_iter, tol, memory):
    """L-BFGS with Armijo backtracking. Returns ``(w, n_iter)``."""
    n = Xs.shape[0]
    m = w0.shape[0]
    w = w0.copy()
    g = np.empty(m)
    g_new = np.empty(m)
    acts, delta, delta2 = _mlp_workspace(np.ascontiguousarray(Xs.T), sizes)
    f = _mlp_loss_grad_ws(w, t, sizes, l2, g, acts, delta, delta2)
    S = np.zeros((memory, m))
    Yh = np.zeros((memory, m))
    rho = np.zeros(memory)
    alpha_h = np.zeros(memory)
    n_hist = 0
    head = 0
    scale = max(1.0, float(n))
    w_new = np.empty(m)
    d = np.empty(m)
    it = 0
    for it in range(max_iter):
        gmax = 0.0
        for k in range(m):
            gmax = max(gmax, abs(g[k]))
        if gmax / scale <= tol:
            break
        # two-loop recursion
        for k in range(m):
            d[k] = -g[k]
        for h in range(n_hist):
            idx = (head - 1 - h) % memory
            a = 0.0
            for k in range(m):
                a += S[idx, k] * d[k]
            a *= rho[idx]
            alpha_h[idx] = a
            for k in range(m):
                d[k] -= a * Yh[idx, k]
        if n_hist > 0:
            idx = (head - 1) % memory
            sy = 0.0
            yy = 0.0
            for k in range(m):
                sy += S[idx, k] * Yh[idx, k]
                yy += Yh[idx, k] * Yh[idx, k]
            gamma = sy / yy
            for k in range(m):
                d[k] *= gamma
        for h in range(n_hist - 1, -1, -1):
            idx = (head - 1 - h) % memory
            b = 0.0
            for k in range(m):
                b += Yh[idx, k] * d[k]
            b *= rho[idx]
            for k in range(m):
                d[k] += S[idx, k] * (alpha_h[idx] - b)
        slope = 0.0
        for k in range(m):
            slope += g[k] * d[k]
        if slope >= 0.0:
            n_hist = 0
            slope = 0.0
            for k in range(m):
                d[k] = -g[k]
                slope -= g[k] * g[k]
        step = 1.0
        if n_hist == 0:
            gn = 0.0
            for k in range(m):
                gn += abs(g[k])
            step = min(1.0, 1.0 / gn) if gn > 0.0 else 1.0
        accepted = False
        f_new = f
        for _ in range(40):
            for k in range(m):
                w_new[k] = w[k] + step * d[k]
            f_new = _mlp_loss_grad_ws(w_new, t, sizes, l2, g_new, acts, delta, delta2)
            if f_new <= f + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        sy = 0.0
        ss = 0.0
        yy = 0.0
        for k in range(m):
            sk = step * d[k]
            yk = g_new[k] - g[k]
            S[head, k] = sk
            Yh[head, k] = yk
            sy += sk * yk
            ss += sk * sk
            yy += yk * yk
        if sy > 1e-10 * np.sqrt(ss * yy):
            rho[head] = 1.0 / sy
            head = (head + 1) % memory
            n_hist = min(n_hist + 1, memory)
        decrease = f - f_new
        w[:] = w_new
        g[:] = g_new
        f = f_new
        if decrease <= 2.220446049250313e-09 * max(1.0, abs(f)):
            break
    return w, it


@njit(cache=True, error_model="numpy")
def scores_nb(kind, w, Xs, sizes):
    if kind == 0:
        return logistic_scores(w, Xs)
    return mlp_scores(w, Xs, sizes)


@njit(cache=True, error_model="numpy")
def fit_nb(kind, Xs, t, sizes, l2, w0, max_iter, tol, memory):
    if kind == 0:
        w, _ = fit_logistic_nb(Xs, t, l2, max_iter, tol)
        return w
    w, _ = fit_mlp_nb(Xs, t, sizes, l2, w0, max_iter, tol, memory)
    return w


@njit(cache=True, error_model="numpy")
def clipped_probs(z):
    n = z.shape[0]
    p = np.empty(n)
    for i in range(n):
        v = _sigmoid(z[i])
        p[i] = min(max(v, P_MIN), 1.0 - P_MIN)
    return p


@njit(cache=True, error_model="numpy")
def binary_loglik(p, t):
    s = 0.0
    for i in range(p.shape[0]):
        if t[i] > 0.5:
            s += np.log(p[i])
        else:
            s += np.log(1.0 - p[i])
    return s


# ---------------------------------------------------------------------------
# Python API
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 1000
    tol: float = 1e-6
    tol_mlp: float = 1e-4
    memory: int = 10
    l2_logistic: float = DEFAULT_L2["logistic"]
    l2_mlp: float = DEFAULT_L2["mlp"]

    def l2_for(self, kind: ClassifierKind) -> float:
        return self.l2_logistic if kind.name == "logistic" else self.l2_mlp

    def tol_for(self, kind: ClassifierKind) -> float:
        return self.tol if kind.name == "logistic" else self.tol_mlp


def glorot_init(kind: ClassifierKind, q: int, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform weights and biases; the sigmoid output layer uses gain 2."""
    if kind.name == "logistic":
        return np.zeros(q + 1)
    sizes = kind.layer_sizes(q)
    parts = []
    for l in range(len(sizes) - 1):
        fan_in, fan_out = int(sizes[l]), int(sizes[l + 1])
        factor = 2.0 if l == len(sizes) - 2 else 6.0
        bound = np.sqrt(factor / (fan_in + fan_out))
        parts.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
        parts.append(rng.uniform(-bound, bound, size=fan_out))
    return np.concatenate(parts)


def _as_features(X, q=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :] if q is not None and X.shape[0] == q else X[:, None]
    if q is not None and X.shape[1] != q:
        raise ValueError(f"expected {q} covariates, got {X.shape[1]}")
    return np.ascontiguousarray(X)


def predict_prob(params: ClassifierParams, X) -> np.ndarray:
    """Clipped probability of the left child for each row of ``X``."""
    X = _as_features(X, params.q)
    Xs = (X - params.mean) / params.scale
    z = scores_nb(params.kind.code, params.weights, Xs, params.kind.layer_sizes(params.q))
    return clipped_probs(z)


def cross_entropy(params: ClassifierParams, X, left) -> float:
    """Binary log-likelihood (larger is better) of the left/right labels."""
    left = np.asarray(left, dtype=bool).ravel()
    if left.shape[0] == 0:
        return 0.0
    p = predict_prob(params, X)
    return float(binary_loglik(p, left.astype(float)))


def penalized_loss_and_grad(kind: ClassifierKind, weights, Xs, left, l2: float):
    """Penalized negative log-likelihood and its gradient on standardized features."""
    kind = ClassifierKind.parse(kind)
    Xs = np.ascontiguousarray(Xs, dtype=float)
    t = np.asarray(left, dtype=float).ravel()
    w = np.asarray(weights, dtype=float)
    grad = np.empty_like(w)
    if kind.name == "logistic":
        loss = logistic_loss_grad(w, Xs, t, l2, grad)
    else:
        loss = mlp_loss_grad(w, Xs, t, kind.layer_sizes(Xs.shape[1]), l2, grad)
    return float(loss), grad


def fit(kind, X, left, seed: int = 0, options: FitOptions | None = None) -> ClassifierParams:
    """Fit a classifier to left/right labels; deterministic given ``seed``."""
    kind = ClassifierKind.parse(kind)
    options = options or FitOptions()
    X = _as_features(X)
    left = np.asarray(left, dtype=bool).ravel()
    if X.shape[0] == 0:
        raise ValueError("need at least one sample")
    if X.shape[0] != left.shape[0]:
        raise ValueError("X and labels have different lengths")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    q = X.shape[1]
    mean, scale = standardize_stats(X)
    Xs = np.ascontiguousarray((X - mean) / scale)
    w0 = glorot_init(kind, q, np.random.default_rng(seed))
    l2 = options.l2_for(kind)
    w = fit_nb(kind.code, Xs, left.astype(float), kind.layer_sizes(q), l2, w0,
               options.max_iter, options.tol_for(kind), options.memory)
    return ClassifierParams(kind, w, mean, scale, l2)


def constant_params(kind, q: int, prob_left: float) -> ClassifierParams:
    """Parameters of a classifier that ignores ``x`` and returns ``prob_left``."""
    kind = ClassifierKind.parse(kind)
    p = min(max(prob_left, P_MIN), 1 - P_MIN)
    logit = np.log(p) - np.log1p(-p)
    w = np.zeros(kind.n_params(q))
    if kind.name == "logistic":
        w[0] = logit
    else:
        w[-1] = logit
    return ClassifierParams(kind, w, np.zeros(q), np.ones(q))
