import numpy as np
import torch


def finite_difference_errors(fn, inputs, wrt, n_coords=50, eps=1e-4, seed=0):
    """Relative errors of float32 autograd gradients against central differences.

    ``fn`` maps the ``inputs`` tensors to a scalar; ``wrt`` indexes the input
    being checked. The analytic gradient is taken in the inputs' own dtype
    (float32 here). The central differences are the reference, so they are
    evaluated in float64 at exactly the same float32 point, which keeps
    roundoff in the loss value out of the comparison. The error at coordinate
    ``i`` is ``|g_i - fd_i| / max(|g_i|, |fd_i|, floor)`` with ``floor`` 1e-3
    of the largest sampled gradient magnitude.
    """
    inputs = [t.detach().clone() for t in inputs]
    target = inputs[wrt].requires_grad_(True)
    fn(*inputs).backward()
    grad = target.grad.detach().reshape(-1).numpy().astype(np.float64)
    rng = np.random.default_rng(seed)
    coords = rng.choice(grad.size, size=min(n_coords, grad.size), replace=False)
    ref = [t.detach().to(torch.float64) for t in inputs]
    flat = ref[wrt].reshape(-1)
    fd = []
    with torch.no_grad():
        for i in coords:
            orig = flat[i].item()
            flat[i] = orig + eps
            up = fn(*ref).item()
            flat[i] = orig - eps
            down = fn(*ref).item()
            flat[i] = orig
            fd.append((up - down) / (2 * eps))
    fd = np.array(fd)
    g = grad[coords]
    floor = 1e-3 * max(np.max(np.abs(g)), np.max(np.abs(fd)), 1e-12)
    return np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), floor)
