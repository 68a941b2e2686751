"""Independent brute-force oracles used to freeze expected test values.

Everything here is written as plain loops or direct pair enumeration,
deliberately sharing no code with the package implementations it checks.
"""

import numpy as np


def kendall_tau_brute(d_hat, d, mask=None) -> float:
    """O(n^2) Kendall tau-a by explicit pair enumeration."""
    d_hat = np.asarray(d_hat, dtype=np.float64).ravel()
    d = np.asarray(d, dtype=np.float64).ravel()
    if mask is not None:
        keep = np.asarray(mask, dtype=bool).ravel()
        d_hat, d = d_hat[keep], d[keep]
    n = d.size
    sign_gt = np.sign(d[:, None] - d[None, :])
    sign_pred = np.sign(d_hat[:, None] - d_hat[None, :])
    upper = np.triu_indices(n, k=1)
    products = sign_gt[upper] * sign_pred[upper]
    concordant = int((products > 0).sum())
    discordant = int((products < 0).sum())
    return (concordant - discordant) / (n * (n - 1) // 2)


def bilinear_downscale_loops(arr: np.ndarray, scale: float) -> np.ndarray:
    """Reference bilinear rescale with half-pixel centers, scalar loops."""
    h, w = arr.shape
    hs, ws = int(np.floor(h * scale + 1e-9)), int(np.floor(w * scale + 1e-9))
    out = np.zeros((hs, ws))
    for oy in range(hs):
        sy = (oy + 0.5) / scale - 0.5
        y0 = int(np.floor(sy))
        fy = sy - y0
        y0c, y1c = min(max(y0, 0), h - 1), min(max(y0 + 1, 0), h - 1)
        for ox in range(ws):
            sx = (ox + 0.5) / scale - 0.5
            x0 = int(np.floor(sx))
            fx = sx - x0
            x0c, x1c = min(max(x0, 0), w - 1), min(max(x0 + 1, 0), w - 1)
            out[oy, ox] = (
                arr[y0c, x0c] * (1 - fy) * (1 - fx)
                + arr[y0c, x1c] * (1 - fy) * fx
                + arr[y1c, x0c] * fy * (1 - fx)
                + arr[y1c, x1c] * fy * fx
            )
    return out


def downscale_mask_loops(mask: np.ndarray, scale: float) -> np.ndarray:
    """Reference mask rule: valid iff all nonzero-weight corners are valid."""
    h, w = mask.shape
    hs, ws = int(np.floor(h * scale + 1e-9)), int(np.floor(w * scale + 1e-9))
    out = np.zeros((hs, ws), dtype=bool)
    for oy in range(hs):
        sy = (oy + 0.5) / scale - 0.5
        y0 = int(np.floor(sy))
        fy = sy - y0
        ys = [(min(max(y0, 0), h - 1), 1 - fy), (min(max(y0 + 1, 0), h - 1), fy)]
        for ox in range(ws):
            sx = (ox + 0.5) / scale - 0.5
            x0 = int(np.floor(sx))
            fx = sx - x0
            xs = [(min(max(x0, 0), w - 1), 1 - fx), (min(max(x0 + 1, 0), w - 1), fx)]
            ok = True
            for yi, wy in ys:
                for xi, wx in xs:
                    if wy * wx > 0 and not mask[yi, xi]:
                        ok = False
            out[oy, ox] = ok
    return out


def masked_l1_loops(pred: np.ndarray, target: np.ndarray, valid: np.ndarray) -> float:
    """Scalar-loop mean absolute error over valid pixels."""
    total = 0.0
    count = 0
    for i in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            if valid[i, j]:
                total += abs(float(pred[i, j]) - float(target[i, j]))
                count += 1
    return total / count


def multiscale_grad_loss_loops(pred, target, valid, scales) -> tuple[float, float]:
    """Reference multiscale gradient loss via the loop-based rescalers."""
    t_full = int(valid.sum())
    lx = ly = 0.0
    for s in scales:
        p = bilinear_downscale_loops(pred, s)
        g = bilinear_downscale_loops(target, s)
        m = downscale_mask_loops(valid, s)
        hs, ws = p.shape
        for i in range(hs - 1):
            for j in range(ws - 1):
                if m[i, j] and m[i, j + 1] and m[i + 1, j]:
                    lx += abs((p[i, j + 1] - p[i, j]) - (g[i, j + 1] - g[i, j])) / (
                        t_full * s * s
                    )
                    ly += abs((p[i + 1, j] - p[i, j]) - (g[i + 1, j] - g[i, j])) / (
                        t_full * s * s
                    )
    return lx, ly


def central_difference_grads(fn, params, eps):
    """Central finite-difference gradient of a scalar function.

    fn() evaluates the loss from the current parameter values; params is
    a list of float64 torch tensors modified in place.
    """
    import torch

    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat = p.view(-1)
            gflat = g.view(-1)
            for k in range(flat.numel()):
                orig = flat[k].item()
                flat[k] = orig + eps
                hi = fn()
                flat[k] = orig - eps
                lo = fn()
                flat[k] = orig
                gflat[k] = (hi - lo) / (2 * eps)
            grads.append(g)
    return grads
