"""Selective state-space scan kernel.

Input-dependent discretization (softplus step size, zero-order-hold for
the state decay, Euler for the input injection) driving the first-order
recurrence

    h_t[i,j] = A_bar_t[i,j] * h_{t-1}[i,j] + Delta_t[i] * B_t[j] * x_t[i]
    y_t[i]   = sum_j C_t[j] * h_t[i,j] + D[i] * x_t[i]

in three equivalent modes: strictly sequential, constant-memory
single-step (bit-identical to sequential by construction: both fold the
same per-step kernel), and chunked with a vectorized associative
combine inside each chunk (agrees to floating-point reassociation
error). The analytic backward pass is checked against finite
differences in the tests.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ContractError, NumericError


def softplus(u: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, u)


def sigmoid(u: np.ndarray) -> np.ndarray:
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    eu = np.exp(u[~pos])
    out[~pos] = eu / (1.0 + eu)
    return out


def default_rank(d_inner: int) -> int:
    return max(1, d_inner // 16)


@dataclass
class SsmParams:
    """Selective-SSM parameter bundle.

    A = -exp(A_log) is negative real, so exp(Delta * A) lies in (0, 1)
    for any positive step size.
    """

    A_log: np.ndarray         # (d_inner, d_state)
    D: np.ndarray             # (d_inner,)
    W_B: np.ndarray           # (d_state, d_inner)
    W_C: np.ndarray           # (d_state, d_inner)
    W_delta_down: np.ndarray  # (d_rank, d_inner)
    W_delta_up: np.ndarray    # (d_inner, d_rank)
    b_delta: np.ndarray       # (d_inner,)

    def __post_init__(self):
        d_inner, d_state = self.A_log.shape
        d_rank = self.W_delta_down.shape[0]
        expected = {
            "D": (d_inner,),
            "W_B": (d_state, d_inner),
            "W_C": (d_state, d_inner),
            "W_delta_down": (d_rank, d_inner),
            "W_delta_up": (d_inner, d_rank),
            "b_delta": (d_inner,),
        }
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise ArgumentError(f"SsmParams.{name} must have shape {shape}, got {actual}")

    @property
    def d_inner(self) -> int:
        return self.A_log.shape[0]

    @property
    def d_state(self) -> int:
        return self.A_log.shape[1]

    @property
    def d_rank(self) -> int:
        return self.W_delta_down.shape[0]

    @property
    def A(self) -> np.ndarray:
        return -np.exp(self.A_log)


@dataclass
class SsmState:
    """Per-stream recurrent hidden state; its size never depends on how
    many steps have been consumed."""

    h: np.ndarray  # (d_inner, d_state)
    position: int = 0

    def copy(self) -> "SsmState":
        return SsmState(h=self.h.copy(), position=self.position)

    def nbytes(self) -> int:
        return self.h.nbytes


def init_state(params: SsmParams) -> SsmState:
    return SsmState(h=np.zeros((params.d_inner, params.d_state)), position=0)


def init_params(d_inner: int, d_state: int = 16, d_rank: int | None = None,
                rng: np.random.Generator | None = None) -> SsmParams:
    """S4-style initialization: A spans timescales -1..-d_state, the step
    bias makes softplus(b_delta) log-uniform in [0.001, 0.1]."""
    if rng is None:
        rng = np.random.default_rng(0)
    if d_rank is None:
        d_rank = default_rank(d_inner)
    A_log = np.tile(np.log(np.arange(1, d_state + 1, dtype=np.float64)), (d_inner, 1))
    dt = np.exp(rng.uniform(math.log(1e-3), math.log(1e-1), size=d_inner))
    b_delta = dt + np.log(-np.expm1(-dt))  # inverse softplus
    scale = 1.0 / math.sqrt(d_inner)
    return SsmParams(
        A_log=A_log,
        D=np.ones(d_inner),
        W_B=rng.normal(0.0, scale, size=(d_state, d_inner)),
        W_C=rng.normal(0.0, scale, size=(d_state, d_inner)),
        W_delta_down=rng.normal(0.0, scale, size=(d_rank, d_inner)),
        W_delta_up=rng.normal(0.0, 1.0 / math.sqrt(d_rank), size=(d_inner, d_rank)),
        b_delta=b_delta,
    )


def selective_project(params: SsmParams, x_t: np.ndarray):
    """Input-dependent step size and projections: Delta_t = softplus(W_dl
    x_t + b), B_t = W_B x_t, C_t = W_C x_t."""
    if not np.all(np.isfinite(x_t)):
        raise NumericError("non-finite input", component="selective_project")
    u_t = params.W_delta_up @ (params.W_delta_down @ x_t) + params.b_delta
    delta_t = softplus(u_t)
    B_t = params.W_B @ x_t
    C_t = params.W_C @ x_t
    return delta_t, B_t, C_t


def discretize(delta_t: np.ndarray, A: np.ndarray, B_t: np.ndarray):
    """A_bar = exp(Delta*A) (zero-order hold), B_bar = Delta*B (Euler)."""
    A_bar = np.exp(delta_t[:, None] * A)
    B_bar = delta_t[:, None] * B_t[None, :]
    return A_bar, B_bar


def _step_kernel(params: SsmParams, x_t: np.ndarray, h: np.ndarray):
    """One recurrence step; the single shared kernel keeps sequential,
    single-step and degenerate chunked modes bit-identical."""
    u_t = params.W_delta_up @ (params.W_delta_down @ x_t) + params.b_delta
    delta_t = softplus(u_t)
    B_t = params.W_B @ x_t
    C_t = params.W_C @ x_t
    A_bar = np.exp(delta_t[:, None] * params.A)
    b_t = (delta_t[:, None] * B_t[None, :]) * x_t[:, None]
    h_new = A_bar * h + b_t
    y_t = np.einsum("dn,n->d", h_new, C_t) + params.D * x_t
    return y_t, h_new, (u_t, delta_t, B_t, C_t, A_bar)


def _check_scan_args(params: SsmParams, x: np.ndarray, h0: SsmState | None) -> SsmState:
    if x.ndim != 2 or x.shape[1] != params.d_inner:
        raise ArgumentError(f"x must be (L, {params.d_inner}), got {x.shape}")
    if x.shape[0] < 1:
        raise ArgumentError("sequence must have at least one step")
    if h0 is None:
        h0 = init_state(params)
    if h0.h.shape != (params.d_inner, params.d_state):
        raise ArgumentError(
            f"state must be ({params.d_inner}, {params.d_state}), got {h0.h.shape}")
    return h0


def scan_step(params: SsmParams, x_t: np.ndarray, state: SsmState):
    """Advance one step; returns (y_t, new state)."""
    if x_t.shape != (params.d_inner,):
        raise ArgumentError(f"x_t must be ({params.d_inner},), got {x_t.shape}")
    if state.h.shape != (params.d_inner, params.d_state):
        raise ArgumentError(
            f"state must be ({params.d_inner}, {params.d_state}), got {state.h.shape}")
    y_t, h_new, _ = _step_kernel(params, x_t, state.h)
    return y_t, SsmState(h=h_new, position=state.position + 1)


def scan_sequential(params: SsmParams, x: np.ndarray, h0: SsmState | None = None,
                    save: bool = False):
    """Strict left-to-right scan. With save=True also returns the
    activations the backward pass needs."""
    h0 = _check_scan_args(params, x, h0)
    L = x.shape[0]
    y = np.empty_like(x)
    h = h0.h
    saved = None
    if save:
        saved = {
            "x": x, "h0": h0.h.copy(),
            "u": np.empty((L, params.d_inner)),
            "delta": np.empty((L, params.d_inner)),
            "B": np.empty((L, params.d_state)),
            "C": np.empty((L, params.d_state)),
            "A_bar": np.empty((L, params.d_inner, params.d_state)),
            "h": np.empty((L, params.d_inner, params.d_state)),
        }
    for t in range(L):
        y_t, h, extras = _step_kernel(params, x[t], h)
        y[t] = y_t
        if save:
            u_t, delta_t, B_t, C_t, A_bar = extras
            saved["u"][t] = u_t
            saved["delta"][t] = delta_t
            saved["B"][t] = B_t
            saved["C"][t] = C_t
            saved["A_bar"][t] = A_bar
            saved["h"][t] = h
    h_final = SsmState(h=h, position=h0.position + L)
    if save:
        return y, h_final, saved
    return y, h_final


def scan_chunked(params: SsmParams, x: np.ndarray, h0: SsmState | None = None,
                 chunk_len: int = 64):
    """Blocked scan: per-step projections feed a vectorized inclusive scan
    of the associative combine (a1,b1)o(a2,b2) = (a1*a2, a2*b1 + b2)
    inside each chunk; chunk-entry states chain sequentially."""
    if chunk_len < 1:
        raise ArgumentError(f"chunk_len must be >= 1, got {chunk_len}")
    h0 = _check_scan_args(params, x, h0)
    L = x.shape[0]
    y = np.empty_like(x)
    h = h0.h
    for start in range(0, L, chunk_len):
        xc = x[start:start + chunk_len]
        c = xc.shape[0]
        a = np.empty((c, params.d_inner, params.d_state))
        b = np.empty((c, params.d_inner, params.d_state))
        Cs = np.empty((c, params.d_state))
        for t in range(c):
            x_t = xc[t]
            u_t = params.W_delta_up @ (params.W_delta_down @ x_t) + params.b_delta
            delta_t = softplus(u_t)
            B_t = params.W_B @ x_t
            Cs[t] = params.W_C @ x_t
            a[t] = np.exp(delta_t[:, None] * params.A)
            b[t] = (delta_t[:, None] * B_t[None, :]) * x_t[:, None]
        # Hillis-Steele inclusive scan over the chunk axis
        P = a.copy()
        S = b.copy()
        shift = 1
        while shift < c:
            S[shift:] = P[shift:] * S[:-shift] + S[shift:]
            P[shift:] = P[:-shift] * P[shift:]
            shift *= 2
        hs = P * h[None] + S if c > 1 else (a[0] * h + b[0])[None]
        for t in range(c):
            y[start + t] = np.einsum("dn,n->d", hs[t], Cs[t]) + params.D * xc[t]
        h = hs[-1]
    return y, SsmState(h=h, position=h0.position + L)


def scan_backward(params: SsmParams, grad_y: np.ndarray, saved: dict,
                  grad_h_final: np.ndarray | None = None):
    """Analytic reverse-mode gradients of scan_sequential.

    Needs the activations recorded by scan_sequential(..., save=True).
    Returns a dict with gradients for x, h0 and every parameter field.
    """
    if saved is None or "h" not in saved:
        raise ContractError("scan_backward requires saved forward activations")
    x = saved["x"]
    L, d_inner = x.shape
    d_state = params.d_state
    if grad_y.shape != x.shape:
        raise ArgumentError(f"grad_y must be {x.shape}, got {grad_y.shape}")

    A = params.A
    h_all = saved["h"]
    A_bar = saved["A_bar"]
    delta = saved["delta"]
    B = saved["B"]
    C = saved["C"]
    u = saved["u"]

    g_h = np.zeros((d_inner, d_state)) if grad_h_final is None else grad_h_final.copy()
    g_delta = np.empty((L, d_inner))
    g_B = np.empty((L, d_state))
    g_C = np.empty((L, d_state))
    g_x = np.empty((L, d_inner))
    g_A = np.zeros((d_inner, d_state))
    g_D = np.zeros(d_inner)

    for t in range(L - 1, -1, -1):
        gy = grad_y[t]
        h_t = h_all[t]
        h_prev = h_all[t - 1] if t > 0 else saved["h0"]
        g_C[t] = gy @ h_t
        g_D += gy * x[t]
        g_x[t] = gy * params.D
        g_h += gy[:, None] * C[t][None, :]

        gh_B = g_h @ B[t]                       # (d_inner,)
        g_A_bar = g_h * h_prev
        g_delta[t] = np.einsum("dn,dn->d", g_A_bar, A * A_bar[t]) + gh_B * x[t]
        g_B[t] = (delta[t] * x[t]) @ g_h        # sum_i g_h[i,j] delta[i] x[i]
        g_x[t] += delta[t] * gh_B
        g_A += g_A_bar * delta[t][:, None] * A_bar[t]
        g_h = g_h * A_bar[t]

    g_u = g_delta * sigmoid(u)
    r = x @ params.W_delta_down.T               # (L, d_rank)
    g_r = g_u @ params.W_delta_up               # (L, d_rank)
    g_x += g_B @ params.W_B + g_C @ params.W_C + g_r @ params.W_delta_down

    return {
        "x": g_x,
        "h0": g_h,
        "A_log": g_A * A,
        "D": g_D,
        "W_B": g_B.T @ x,
        "W_C": g_C.T @ x,
        "W_delta_down": g_r.T @ x,
        "W_delta_up": g_u.T @ r,
        "b_delta": g_u.sum(axis=0),
    }


def state_to_csv(state: SsmState) -> str:
    """Debug dump: one `channel,state_index,value` row per state entry."""
    out = io.StringIO()
    out.write("channel,state_index,value\n")
    for i in range(state.h.shape[0]):
        for j in range(state.h.shape[1]):
            out.write(f"{i},{j},{state.h[i, j]!r}\n")
    return out.getvalue()
