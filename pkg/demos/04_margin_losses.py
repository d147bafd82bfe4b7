"""
Margin softmax losses and their gradients
=========================================

Compare the loss families on one batch, check the analytic gradients
against finite differences, and look at how the target margin changes the
correction applied to the target class weight.
"""

import math

import numpy as np

from kappaface.losses import MarginLossConfig, forward, loss_and_grads

rng = np.random.default_rng(0)
B, C, d = 6, 5, 8
Z = rng.standard_normal((B, d))
W = rng.standard_normal((C, d))
labels = rng.integers(0, C, B)
psi = rng.uniform(0, 1, C)

configs = {"plain_softmax": MarginLossConfig("plain_softmax", 1.0, 0.0),
           "norm_softmax": MarginLossConfig("norm_softmax", 16.0, 0.0),
           "cosface": MarginLossConfig("cosface", 16.0, 0.35),
           "arcface": MarginLossConfig("arcface", 16.0, 0.5),
           "kappaface": MarginLossConfig("kappaface", 16.0, 0.5)}
for name, cfg in configs.items():
    res = loss_and_grads(Z, W, labels, psi if name == "kappaface" else None, cfg)

    def loss(z, w):
        zz, ww = (z, w) if not cfg.angular else (z / np.linalg.norm(z, axis=1, keepdims=True),
                                                  w / np.linalg.norm(w, axis=1, keepdims=True))
        return forward(zz, ww, labels, psi if name == "kappaface" else None, cfg).loss

    # central difference on one coordinate of W
    h = 1e-5
    Wp, Wm = W.copy(), W.copy()
    Wp[2, 3] += h
    Wm[2, 3] -= h
    fd = (loss(Z, Wp) - loss(Z, Wm)) / (2 * h)
    print(f"{name:14s} loss={res.loss:8.4f}  dL/dW[2,3] analytic={res.grad_class_weights[2, 3]: .6e} fd={fd: .6e}")

# psi = 1 recovers the fixed-margin loss and psi = 0 the unmargined one.
a = loss_and_grads(Z, W, labels, np.ones(C), configs["kappaface"]).loss
b = loss_and_grads(Z, W, labels, None, configs["arcface"]).loss
print("kappaface(psi=1) - arcface:", a - b)

# Smaller target margin -> smaller correction on the target class weight.
theta = 0.4
Zs = np.array([[1.0, 0.0, 0.0]])
Ws = np.array([[math.cos(theta), math.sin(theta), 0.0], [math.cos(1.3), 0.0, math.sin(1.3)],
               [math.cos(1.6), -math.sin(1.6), 0.0]])
for margin in [0.0, 0.25, 0.5, 0.75, 1.0]:
    res = loss_and_grads(Zs, Ws, [0], None, MarginLossConfig("arcface", 64.0, margin))
    print(f"margin {margin:4.2f}: |grad W_target| = {np.linalg.norm(res.grad_class_weights[0]):.3e}")
