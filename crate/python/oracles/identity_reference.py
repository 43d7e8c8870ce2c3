"""Independent PyTorch run of the identity toy used by the core training tests.

usage: identity_reference.py BETA WIDTH LATENT N_B ITERS DEPTH LENGTH_SCALE LR
"""
import sys

import numpy as np
import torch

torch.set_num_threads(1)
torch.manual_seed(0)
rng = np.random.default_rng(0)
beta, width, latent, nb, iters, depth = (
    float(sys.argv[1]), int(sys.argv[2]), int(sys.argv[3]), int(sys.argv[4]), int(sys.argv[5]), int(sys.argv[6]))
ls, lr = float(sys.argv[7]), float(sys.argv[8])

m = 20
x = np.linspace(0, 1, m)
K = np.exp(-(x[:, None] - x[None]) ** 2 / (2 * ls**2)) + 1e-10 * np.eye(m)
U = torch.tensor((np.linalg.cholesky(K) @ rng.standard_normal((m, 50))).T)
S = U.clone()
sinf = S.abs().max(1).values
Y = torch.tensor(x)[:, None]


def mlp(i, o):
    dims = [i] + [width] * depth + [o]
    layers = []
    for a, b in zip(dims[:-1], dims[1:]):
        l = torch.nn.Linear(a, b).double()
        torch.nn.init.xavier_normal_(l.weight)
        torch.nn.init.zeros_(l.bias)
        layers.append(l)

    def f(z):
        for k, l in enumerate(layers):
            z = l(z)
            if k < len(layers) - 1:
                z = torch.tanh(z)
        return z

    return f, [p for l in layers for p in l.parameters()]


branch, pb = mlp(m, latent)
trunk, pt = mlp(1, latent)
branch0, _ = mlp(m, latent)
trunk0, _ = mlp(1, latent)
opt = torch.optim.Adam(pb + pt, lr=lr)
sched = torch.optim.lr_scheduler.StepLR(opt, 1000, 0.9)


def predict(u, y):
    with torch.no_grad():
        b0, t0 = branch0(u), trunk0(y)
    return (branch(u) + beta * b0) @ (trunk(y) + beta * t0).T


for it in range(iters):
    f = torch.tensor(rng.choice(50, nb, replace=False))
    q = torch.tensor(rng.choice(m, 20, replace=False))
    r = (predict(U[f], Y[q]) - S[f][:, q]) / sinf[f][:, None]
    loss = (r**2).mean()
    opt.zero_grad()
    loss.backward()
    opt.step()
    sched.step()

with torch.no_grad():
    P = predict(U, Y)
    err = ((P - S).norm(dim=1) / S.norm(dim=1)).mean().item()
print(f"args {sys.argv[1:]} mean_rel_l2 {err:.4f} final_loss {loss.item():.3e}")
