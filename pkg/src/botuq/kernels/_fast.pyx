# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of ``botuq.kernels.pure``.

Same weight layout, same arithmetic, same clamp rules; see the pure module
for the full description. Written as plain C loops over preallocated
buffers so the per-sample train step costs microseconds instead of the
numpy fallback's array-op overhead.
"""

import numpy as np

from libc.math cimport exp, log, tanh

from .pure import weight_shapes

KIND_LSTM = 0
KIND_CNN_LSTM = 1
PROB_FLOOR = 1e-12

cdef double _FLOOR = 1e-12
cdef int _CNN = 1


cdef inline double _sig(double x) noexcept nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef class Kernel:
    """Single-sample forward/backward engine (compiled backend)."""

    cdef public int kind, T, E, H, C, K, P, Tl, Din
    cdef public dict weights, grads
    cdef public list shapes
    cdef object _m1_ones, _m2_ones

    # weight views
    cdef double[::1] w_embed_w, w_embed_b, w_lstm_b, w_out_b, w_conv_b
    cdef double[:, ::1] w_lstm_wx, w_lstm_wh, w_out_w
    cdef double[:, :, ::1] w_conv_w
    # gradient views
    cdef double[::1] g_embed_w, g_embed_b, g_lstm_b, g_out_b, g_conv_b
    cdef double[:, ::1] g_lstm_wx, g_lstm_wh, g_out_w
    cdef double[:, :, ::1] g_conv_w
    # scratch
    cdef double[:, ::1] v, vp, u, xin, gi, gf, gg, go, cs, tc, h_prev, c_prev, dxin, dr, dvp
    cdef Py_ssize_t[:, ::1] amax
    cdef double[::1] h, c, a, da, hd, probs, dh, dc, x_last
    cdef list _flat_w, _flat_g

    def __init__(self, kind, n_steps, embed_dim, hidden, conv_filters=0, conv_kernel=0, pool=1):
        if kind not in (KIND_LSTM, KIND_CNN_LSTM):
            raise ValueError(f"unknown kernel kind {kind}")
        self.kind = kind
        self.T = n_steps
        self.E = embed_dim
        self.H = hidden
        self.C = conv_filters if kind == KIND_CNN_LSTM else 0
        self.K = conv_kernel if kind == KIND_CNN_LSTM else 0
        self.P = pool if kind == KIND_CNN_LSTM else 1
        if kind == KIND_CNN_LSTM:
            self.Tl = self.T // self.P
            self.Din = self.C
            if self.Tl < 1:
                raise ValueError("pooled sequence is empty")
        else:
            self.Tl = self.T
            self.Din = self.E
        self.shapes = list(weight_shapes(kind, self.E, self.H, self.C, self.K))
        self.weights = {name: np.zeros(shape) for name, shape in self.shapes}
        self.grads = {name: np.zeros(shape) for name, shape in self.shapes}
        self._flat_w = [self.weights[name].reshape(-1) for name, _ in self.shapes]
        self._flat_g = [self.grads[name].reshape(-1) for name, _ in self.shapes]

        self.w_embed_w = self.weights["embed_w"]
        self.w_embed_b = self.weights["embed_b"]
        self.w_lstm_wx = self.weights["lstm_wx"]
        self.w_lstm_wh = self.weights["lstm_wh"]
        self.w_lstm_b = self.weights["lstm_b"]
        self.w_out_w = self.weights["out_w"]
        self.w_out_b = self.weights["out_b"]
        self.g_embed_w = self.grads["embed_w"]
        self.g_embed_b = self.grads["embed_b"]
        self.g_lstm_wx = self.grads["lstm_wx"]
        self.g_lstm_wh = self.grads["lstm_wh"]
        self.g_lstm_b = self.grads["lstm_b"]
        self.g_out_w = self.grads["out_w"]
        self.g_out_b = self.grads["out_b"]
        if kind == KIND_CNN_LSTM:
            self.w_conv_w = self.weights["conv_w"]
            self.w_conv_b = self.weights["conv_b"]
            self.g_conv_w = self.grads["conv_w"]
            self.g_conv_b = self.grads["conv_b"]
            self.vp = np.zeros((self.T + self.K - 1, self.E))
            self.u = np.zeros((self.T, self.C))
            self.dr = np.zeros((self.T, self.C))
            self.dvp = np.zeros((self.T + self.K - 1, self.E))
            self.amax = np.zeros((self.Tl, self.C), dtype=np.intp)
        else:
            self.w_conv_w = np.zeros((1, 1, 1))
            self.w_conv_b = np.zeros(1)
            self.g_conv_w = np.zeros((1, 1, 1))
            self.g_conv_b = np.zeros(1)

        self.v = np.zeros((self.T, self.E))
        self.xin = np.zeros((self.Tl, self.Din))
        self.gi = np.zeros((self.Tl, self.H))
        self.gf = np.zeros((self.Tl, self.H))
        self.gg = np.zeros((self.Tl, self.H))
        self.go = np.zeros((self.Tl, self.H))
        self.cs = np.zeros((self.Tl, self.H))
        self.tc = np.zeros((self.Tl, self.H))
        self.h_prev = np.zeros((self.Tl, self.H))
        self.c_prev = np.zeros((self.Tl, self.H))
        self.dxin = np.zeros((self.Tl, self.Din))
        self.h = np.zeros(self.H)
        self.c = np.zeros(self.H)
        self.a = np.zeros(4 * self.H)
        self.da = np.zeros(4 * self.H)
        self.hd = np.zeros(self.H)
        self.dh = np.zeros(self.H)
        self.dc = np.zeros(self.H)
        self.probs = np.zeros(2)
        self.x_last = np.zeros(self.T)
        self._m1_ones = np.ones((self.Tl, self.Din))
        self._m2_ones = np.ones(self.H)

    # -- weight transfer ---------------------------------------------------

    def load(self, weights):
        for name, _ in self.shapes:
            np.copyto(self.weights[name], weights[name])

    def dump(self):
        return {name: self.weights[name].copy() for name, _ in self.shapes}

    @property
    def mask_shapes(self):
        return (self.Tl, self.Din), (self.H,)

    # -- forward -----------------------------------------------------------

    cdef void _forward_core(self, const double[::1] x, const double[:, ::1] m1,
                            const double[::1] m2) noexcept nogil:
        cdef int T = self.T, E = self.E, H = self.H, C = self.C, K = self.K
        cdef int P = self.P, Tl = self.Tl, Din = self.Din
        cdef int t, e, c, k, j, i, s, pad_l
        cdef double acc, best, val, m, e0, e1, z0, z1
        cdef Py_ssize_t jb

        for t in range(T):
            val = x[t]
            self.x_last[t] = val
            for e in range(E):
                self.v[t, e] = self.w_embed_w[e] * val + self.w_embed_b[e]

        if self.kind == _CNN:
            pad_l = (K - 1) // 2
            for t in range(T + K - 1):
                for e in range(E):
                    self.vp[t, e] = 0.0
            for t in range(T):
                for e in range(E):
                    self.vp[pad_l + t, e] = self.v[t, e]
            for t in range(T):
                for c in range(C):
                    acc = self.w_conv_b[c]
                    for k in range(K):
                        for e in range(E):
                            acc += self.w_conv_w[c, e, k] * self.vp[t + k, e]
                    self.u[t, c] = acc
            # ReLU then non-overlapping max pool; first maximum wins ties.
            for s in range(Tl):
                for c in range(C):
                    best = self.u[s * P, c]
                    if best < 0.0:
                        best = 0.0
                    jb = 0
                    for j in range(1, P):
                        val = self.u[s * P + j, c]
                        if val < 0.0:
                            val = 0.0
                        if val > best:
                            best = val
                            jb = j
                    self.xin[s, c] = best * m1[s, c]
                    self.amax[s, c] = jb
        else:
            for t in range(Tl):
                for e in range(E):
                    self.xin[t, e] = self.v[t, e] * m1[t, e]

        for i in range(H):
            self.h[i] = 0.0
            self.c[i] = 0.0
        for t in range(Tl):
            for i in range(H):
                self.h_prev[t, i] = self.h[i]
                self.c_prev[t, i] = self.c[i]
            for i in range(4 * H):
                acc = self.w_lstm_b[i]
                for j in range(Din):
                    acc += self.w_lstm_wx[i, j] * self.xin[t, j]
                for j in range(H):
                    acc += self.w_lstm_wh[i, j] * self.h[j]
                self.a[i] = acc
            for i in range(H):
                self.gi[t, i] = _sig(self.a[i])
                self.gf[t, i] = _sig(self.a[H + i])
                self.gg[t, i] = tanh(self.a[2 * H + i])
                self.go[t, i] = _sig(self.a[3 * H + i])
                self.c[i] = self.gf[t, i] * self.c[i] + self.gi[t, i] * self.gg[t, i]
                self.cs[t, i] = self.c[i]
                self.tc[t, i] = tanh(self.c[i])
                self.h[i] = self.go[t, i] * self.tc[t, i]

        for i in range(H):
            self.hd[i] = self.h[i] * m2[i]
        z0 = self.w_out_b[0]
        z1 = self.w_out_b[1]
        for j in range(H):
            z0 += self.w_out_w[0, j] * self.hd[j]
            z1 += self.w_out_w[1, j] * self.hd[j]
        m = z0 if z0 > z1 else z1
        e0 = exp(z0 - m)
        e1 = exp(z1 - m)
        self.probs[0] = e0 / (e0 + e1)
        self.probs[1] = e1 / (e0 + e1)

    def forward(self, x, m1=None, m2=None):
        """Class probabilities for one sample; masks None means eval mode."""
        cdef const double[::1] xv = x
        cdef const double[:, ::1] m1v = self._m1_ones if m1 is None else m1
        cdef const double[::1] m2v = self._m2_ones if m2 is None else m2
        if xv.shape[0] != self.T:
            raise ValueError("input length mismatch")
        self._forward_core(xv, m1v, m2v)
        return np.asarray(self.probs).copy()

    # -- backward ----------------------------------------------------------

    cdef double _backward_core(self, int y, const double[:, ::1] m1,
                               const double[::1] m2) noexcept nogil:
        cdef int T = self.T, E = self.E, H = self.H, C = self.C, K = self.K
        cdef int P = self.P, Tl = self.Tl, Din = self.Din
        cdef int t, e, c, k, j, i, s, pad_l
        cdef double p_y, loss, d, acc
        cdef double dl0, dl1, do_, di, dg, df, dcv
        cdef Py_ssize_t idx

        p_y = self.probs[y]
        if p_y > _FLOOR:
            loss = -log(p_y)
        else:
            loss = -log(_FLOOR)
            return loss  # flat region, gradients stay zero

        dl0 = self.probs[0]
        dl1 = self.probs[1]
        if y == 0:
            dl0 -= 1.0
        else:
            dl1 -= 1.0
        for j in range(H):
            self.g_out_w[0, j] += dl0 * self.hd[j]
            self.g_out_w[1, j] += dl1 * self.hd[j]
        self.g_out_b[0] += dl0
        self.g_out_b[1] += dl1
        for j in range(H):
            self.dh[j] = (self.w_out_w[0, j] * dl0 + self.w_out_w[1, j] * dl1) * m2[j]
            self.dc[j] = 0.0

        for t in range(Tl - 1, -1, -1):
            for i in range(H):
                do_ = self.dh[i] * self.tc[t, i]
                dcv = self.dc[i] + self.dh[i] * self.go[t, i] * (1.0 - self.tc[t, i] * self.tc[t, i])
                di = dcv * self.gg[t, i]
                dg = dcv * self.gi[t, i]
                df = dcv * self.c_prev[t, i]
                self.dc[i] = dcv * self.gf[t, i]
                self.da[i] = di * self.gi[t, i] * (1.0 - self.gi[t, i])
                self.da[H + i] = df * self.gf[t, i] * (1.0 - self.gf[t, i])
                self.da[2 * H + i] = dg * (1.0 - self.gg[t, i] * self.gg[t, i])
                self.da[3 * H + i] = do_ * self.go[t, i] * (1.0 - self.go[t, i])
            for i in range(4 * H):
                d = self.da[i]
                for j in range(Din):
                    self.g_lstm_wx[i, j] += d * self.xin[t, j]
                for j in range(H):
                    self.g_lstm_wh[i, j] += d * self.h_prev[t, j]
                self.g_lstm_b[i] += d
            for j in range(Din):
                acc = 0.0
                for i in range(4 * H):
                    acc += self.w_lstm_wx[i, j] * self.da[i]
                self.dxin[t, j] = acc
            for j in range(H):
                acc = 0.0
                for i in range(4 * H):
                    acc += self.w_lstm_wh[i, j] * self.da[i]
                self.dh[j] = acc

        for t in range(Tl):
            for j in range(Din):
                self.dxin[t, j] *= m1[t, j]

        if self.kind == _CNN:
            pad_l = (K - 1) // 2
            for t in range(T):
                for c in range(C):
                    self.dr[t, c] = 0.0
            for s in range(Tl):
                for c in range(C):
                    idx = s * P + self.amax[s, c]
                    self.dr[idx, c] = self.dxin[s, c]
            for t in range(T + K - 1):
                for e in range(E):
                    self.dvp[t, e] = 0.0
            for t in range(T):
                for c in range(C):
                    if self.u[t, c] > 0.0:
                        d = self.dr[t, c]
                    else:
                        d = 0.0
                    if d != 0.0:
                        self.g_conv_b[c] += d
                        for k in range(K):
                            for e in range(E):
                                self.g_conv_w[c, e, k] += d * self.vp[t + k, e]
                                self.dvp[t + k, e] += d * self.w_conv_w[c, e, k]
            for t in range(T):
                d = self.x_last[t]
                for e in range(E):
                    self.g_embed_w[e] += self.dvp[pad_l + t, e] * d
                    self.g_embed_b[e] += self.dvp[pad_l + t, e]
        else:
            for t in range(T):
                d = self.x_last[t]
                for e in range(E):
                    self.g_embed_w[e] += self.dxin[t, e] * d
                    self.g_embed_b[e] += self.dxin[t, e]
        return loss

    def loss_grad(self, x, y, m1=None, m2=None):
        """Cross-entropy loss for (x, y); fills self.grads with d loss/d w."""
        cdef const double[::1] xv = x
        cdef const double[:, ::1] m1v = self._m1_ones if m1 is None else m1
        cdef const double[::1] m2v = self._m2_ones if m2 is None else m2
        cdef int yv = y
        if xv.shape[0] != self.T:
            raise ValueError("input length mismatch")
        for arr in self._flat_g:
            arr.fill(0.0)
        self._forward_core(xv, m1v, m2v)
        return self._backward_core(yv, m1v, m2v)

    def sgd_step(self, x, y, m1, m2, lr):
        """One fused per-sample update: w <- w - lr * d loss/d w."""
        cdef double loss = self.loss_grad(x, y, m1, m2)
        cdef double lrv = lr
        cdef double[::1] wv, gv
        cdef Py_ssize_t i
        for wa, ga in zip(self._flat_w, self._flat_g):
            wv = wa
            gv = ga
            for i in range(wv.shape[0]):
                wv[i] -= lrv * gv[i]
        return loss
