"""Reference numpy implementation of the classifier compute kernels.

A ``Kernel`` owns the weights of one classifier instance and runs the
single-sample forward pass, the backward pass (cross-entropy gradient for
every weight tensor), and the fused SGD step. The compiled twin in
``_fast.pyx`` mirrors these routines operation for operation; this module is
the import-time fallback when the extension is unavailable and the ground
truth the extension is tested against.

Architecture, end to end (dims: T input steps, E embed width, H hidden
width, C conv filters, W conv kernel width, P pool width):

    scalar step x_t -> embed:  v_t = embed_w * x_t + embed_b          (E,)
    [cnn_lstm only]   conv1d over time, 'same' zero padding, ReLU,
                      non-overlapping max pool of width P             (T//P, C)
    inverted dropout mask m1 on the LSTM input sequence (train only)
    LSTM, gate order [input, forget, cell, output], zero initial state
    inverted dropout mask m2 on the final hidden state (train only)
    dense layer to 2 logits -> softmax

Losses are cross-entropy with the predicted probability floored at
``PROB_FLOOR``; when the floor is active the loss is locally flat and the
returned gradients are exactly zero.
"""

import numpy as np

KIND_LSTM = 0
KIND_CNN_LSTM = 1

PROB_FLOOR = 1e-12


def weight_shapes(kind, embed_dim, hidden, conv_filters=0, conv_kernel=0):
    """Name and shape of every weight tensor, in canonical order.

    The order is load-bearing: seeded weight initialisation and posterior
    sampling draw tensors in exactly this sequence.
    """
    e, h = embed_dim, hidden
    shapes = [("embed_w", (e,)), ("embed_b", (e,))]
    if kind == KIND_CNN_LSTM:
        shapes += [("conv_w", (conv_filters, e, conv_kernel)), ("conv_b", (conv_filters,))]
        d_in = conv_filters
    else:
        d_in = e
    shapes += [
        ("lstm_wx", (4 * h, d_in)),
        ("lstm_wh", (4 * h, h)),
        ("lstm_b", (4 * h,)),
        ("out_w", (2, h)),
        ("out_b", (2,)),
    ]
    return shapes


def _sigmoid(x):
    # Branching form: no overflow for large |x|.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax2(z):
    e = np.exp(z - z.max())
    return e / e.sum()


class Kernel:
    """Single-sample forward/backward engine for one classifier instance.

    ``weights`` and ``grads`` are dicts of owned float64 arrays;
    ``loss_grad`` overwrites ``grads`` in place on every call, callers that
    keep gradients must copy them out.
    """

    def __init__(self, kind, n_steps, embed_dim, hidden, conv_filters=0, conv_kernel=0, pool=1):
        if kind not in (KIND_LSTM, KIND_CNN_LSTM):
            raise ValueError(f"unknown kernel kind {kind}")
        self.kind = kind
        self.T = int(n_steps)
        self.E = int(embed_dim)
        self.H = int(hidden)
        self.C = int(conv_filters) if kind == KIND_CNN_LSTM else 0
        self.K = int(conv_kernel) if kind == KIND_CNN_LSTM else 0
        self.P = int(pool) if kind == KIND_CNN_LSTM else 1
        if kind == KIND_CNN_LSTM:
            self.Tl = self.T // self.P
            self.Din = self.C
            if self.Tl < 1:
                raise ValueError("pooled sequence is empty")
        else:
            self.Tl = self.T
            self.Din = self.E
        self.shapes = weight_shapes(kind, self.E, self.H, self.C, self.K)
        self.weights = {name: np.zeros(shape) for name, shape in self.shapes}
        self.grads = {name: np.zeros(shape) for name, shape in self.shapes}
        self._cache = None

    # -- weight transfer ---------------------------------------------------

    def load(self, weights):
        for name, _ in self.shapes:
            np.copyto(self.weights[name], weights[name])

    def dump(self):
        return {name: self.weights[name].copy() for name, _ in self.shapes}

    @property
    def mask_shapes(self):
        """Dropout mask shapes: (LSTM input sequence, final hidden state)."""
        return (self.Tl, self.Din), (self.H,)

    # -- forward -----------------------------------------------------------

    def forward(self, x, m1=None, m2=None):
        """Class probabilities for one sample; masks None means eval mode."""
        w = self.weights
        x = np.asarray(x, dtype=np.float64)
        v = x[:, None] * w["embed_w"][None, :] + w["embed_b"][None, :]  # (T, E)

        if self.kind == KIND_CNN_LSTM:
            pad_l = (self.K - 1) // 2
            vp = np.zeros((self.T + self.K - 1, self.E))
            vp[pad_l:pad_l + self.T] = v
            u = np.tile(w["conv_b"], (self.T, 1))  # (T, C)
            for k in range(self.K):
                u += vp[k:k + self.T] @ w["conv_w"][:, :, k].T
            r = np.maximum(u, 0.0)
            rt = r[: self.Tl * self.P].reshape(self.Tl, self.P, self.C)
            argmax = rt.argmax(axis=1)  # first maximum wins on ties
            q = np.take_along_axis(rt, argmax[:, None, :], axis=1)[:, 0, :]
            xin = q
        else:
            vp = u = argmax = None
            xin = v

        if m1 is not None:
            xin = xin * m1

        h4 = 4 * self.H
        hh = self.H
        wx, wh, b = w["lstm_wx"], w["lstm_wh"], w["lstm_b"]
        gi = np.zeros((self.Tl, hh))
        gf = np.zeros((self.Tl, hh))
        gg = np.zeros((self.Tl, hh))
        go = np.zeros((self.Tl, hh))
        cs = np.zeros((self.Tl, hh))
        tc = np.zeros((self.Tl, hh))
        h_prev = np.zeros((self.Tl, hh))
        c_prev = np.zeros((self.Tl, hh))
        h = np.zeros(hh)
        c = np.zeros(hh)
        for t in range(self.Tl):
            h_prev[t] = h
            c_prev[t] = c
            a = wx @ xin[t] + wh @ h + b
            gi[t] = _sigmoid(a[:hh])
            gf[t] = _sigmoid(a[hh:2 * hh])
            gg[t] = np.tanh(a[2 * hh:3 * hh])
            go[t] = _sigmoid(a[3 * hh:h4])
            c = gf[t] * c + gi[t] * gg[t]
            cs[t] = c
            tc[t] = np.tanh(c)
            h = go[t] * tc[t]

        hd = h * m2 if m2 is not None else h
        logits = w["out_w"] @ hd + w["out_b"]
        probs = _softmax2(logits)

        self._cache = dict(
            x=x, v=v, vp=vp, u=u, argmax=argmax, xin=xin, m1=m1, m2=m2,
            gi=gi, gf=gf, gg=gg, go=go, cs=cs, tc=tc,
            h_prev=h_prev, c_prev=c_prev, hd=hd, probs=probs,
        )
        return probs

    # -- backward ----------------------------------------------------------

    def loss_grad(self, x, y, m1=None, m2=None):
        """Cross-entropy loss for (x, y); fills self.grads with d loss/d w."""
        probs = self.forward(x, m1, m2)
        for name, _ in self.shapes:
            self.grads[name][...] = 0.0
        p_y = probs[y]
        loss = -np.log(max(p_y, PROB_FLOOR))
        if p_y <= PROB_FLOOR:
            return float(loss)  # flat region, zero gradient

        cache = self._cache
        w = self.weights
        g = self.grads
        hh = self.H

        dlogits = probs.copy()
        dlogits[y] -= 1.0
        g["out_w"] += np.outer(dlogits, cache["hd"])
        g["out_b"] += dlogits
        dhd = w["out_w"].T @ dlogits
        dh = dhd * cache["m2"] if cache["m2"] is not None else dhd

        gi, gf, gg, go = cache["gi"], cache["gf"], cache["gg"], cache["go"]
        tc, c_prev, h_prev = cache["tc"], cache["c_prev"], cache["h_prev"]
        xin = cache["xin"]
        wx, wh = w["lstm_wx"], w["lstm_wh"]
        dxin = np.zeros_like(xin)
        dc = np.zeros(hh)
        da = np.zeros(4 * hh)
        for t in range(self.Tl - 1, -1, -1):
            do = dh * tc[t]
            dc = dc + dh * go[t] * (1.0 - tc[t] * tc[t])
            di = dc * gg[t]
            dg = dc * gi[t]
            df = dc * c_prev[t]
            dc_next = dc * gf[t]
            da[:hh] = di * gi[t] * (1.0 - gi[t])
            da[hh:2 * hh] = df * gf[t] * (1.0 - gf[t])
            da[2 * hh:3 * hh] = dg * (1.0 - gg[t] * gg[t])
            da[3 * hh:] = do * go[t] * (1.0 - go[t])
            g["lstm_wx"] += np.outer(da, xin[t])
            g["lstm_wh"] += np.outer(da, h_prev[t])
            g["lstm_b"] += da
            dxin[t] = wx.T @ da
            dh = wh.T @ da
            dc = dc_next

        if cache["m1"] is not None:
            dxin = dxin * cache["m1"]

        if self.kind == KIND_CNN_LSTM:
            dr = np.zeros((self.T, self.C))
            flat = dr[: self.Tl * self.P].reshape(self.Tl, self.P, self.C)
            np.put_along_axis(flat, cache["argmax"][:, None, :], dxin[:, None, :], axis=1)
            du = dr * (cache["u"] > 0.0)
            g["conv_b"] += du.sum(axis=0)
            pad_l = (self.K - 1) // 2
            dvp = np.zeros_like(cache["vp"])
            for k in range(self.K):
                g["conv_w"][:, :, k] += du.T @ cache["vp"][k:k + self.T]
                dvp[k:k + self.T] += du @ w["conv_w"][:, :, k]
            dv = dvp[pad_l:pad_l + self.T]
        else:
            dv = dxin

        g["embed_w"] += (dv * cache["x"][:, None]).sum(axis=0)
        g["embed_b"] += dv.sum(axis=0)
        return float(loss)

    def sgd_step(self, x, y, m1, m2, lr):
        """One fused per-sample update: w <- w - lr * d loss/d w."""
        loss = self.loss_grad(x, y, m1, m2)
        for name, _ in self.shapes:
            self.weights[name] -= lr * self.grads[name]
        return loss
