"""Differentiable primitives and the finite-difference gradient checker.

torch supplies the array type and reverse-mode autodiff; the functions
here pin the exact conventions the model relies on (3x3 kernels with
zero padding 1, 2x2/stride-2 pooling, affine-free instance norm with
eps 1e-5) and validate shapes up front. All primitives accept either a
single sample or a leading batch dimension and preserve dtype, so tests
can run them in float64.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import torch
import torch.nn.functional as F

from .errors import NumericalError

INSTANCE_NORM_EPS = 1e-5


def conv2d(x: torch.Tensor, kernel: torch.Tensor, bias: torch.Tensor | None = None) -> torch.Tensor:
    """3x3 cross-correlation, stride 1, zero padding 1 (same spatial size)."""
    if kernel.ndim != 4 or kernel.shape[-2:] != (3, 3):
        raise ValueError(f"kernel must be (C_out, C_in, 3, 3), got {tuple(kernel.shape)}")
    squeeze = x.ndim == 3
    if squeeze:
        x = x.unsqueeze(0)
    if x.shape[1] != kernel.shape[1]:
        raise ValueError(f"input has {x.shape[1]} channels, kernel expects {kernel.shape[1]}")
    out = F.conv2d(x, kernel, bias, stride=1, padding=1)
    return out.squeeze(0) if squeeze else out


def relu(x: torch.Tensor) -> torch.Tensor:
    return F.relu(x)


def maxpool2(x: torch.Tensor) -> torch.Tensor:
    """2x2 max pooling with stride 2; gradient routes to the argmax element."""
    return F.max_pool2d(x, kernel_size=2, stride=2)


def dense(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor | None = None) -> torch.Tensor:
    """Affine map x @ weight.T + bias with weight shaped (out, in)."""
    if x.shape[-1] != weight.shape[1]:
        raise ValueError(f"input dim {x.shape[-1]} != weight in-dim {weight.shape[1]}")
    return F.linear(x, weight, bias)


def softmax(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    return F.softmax(x, dim=dim)


def instance_norm(x: torch.Tensor) -> torch.Tensor:
    """Per-sample, per-channel standardization over spatial dims, no affine."""
    squeeze = x.ndim == 3
    if squeeze:
        x = x.unsqueeze(0)
    mean = x.mean(dim=(2, 3), keepdim=True)
    var = x.var(dim=(2, 3), keepdim=True, unbiased=False)
    out = (x - mean) / torch.sqrt(var + INSTANCE_NORM_EPS)
    return out.squeeze(0) if squeeze else out


def check_finite(x: torch.Tensor, what: str) -> torch.Tensor:
    """Raise NumericalError if x contains NaN/Inf (contract violation)."""
    if not torch.isfinite(x).all():
        raise NumericalError(f"non-finite values in {what}")
    return x


@dataclass
class GradCheckReport:
    """Outcome of one finite-difference check."""

    name: str
    max_rel_error: float
    tolerance: float
    n_coords: int
    passed: bool

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (
            f"[{status}] {self.name}: max rel err {self.max_rel_error:.3e} "
            f"(tol {self.tolerance:.1e}, {self.n_coords} coords)"
        )


def finite_diff_grad_check(
    f: Callable[[Sequence[torch.Tensor]], torch.Tensor],
    params: Sequence[torch.Tensor],
    wrt: int = 0,
    tol: float = 1e-3,
    step: float = 1e-4,
    max_coords: int = 64,
    seed: int = 0,
    name: str = "op",
) -> GradCheckReport:
    """Compare autodiff gradients of a scalar-valued f against central differences.

    Probes a random subset of coordinates of params[wrt] (all of them if
    fewer than max_coords) in float64. The relative error per coordinate
    is |g_a - g_fd| / (|g_a| + |g_fd| + 1e-8); the report carries the
    maximum over probed coordinates and passes iff it is <= tol.
    """
    params = [p.detach().to(torch.float64) for p in params]
    target = params[wrt].requires_grad_(True)

    value = f(params)
    if value.numel() != 1:
        raise ValueError("finite_diff_grad_check expects a scalar-valued function")
    if not torch.isfinite(value):
        raise NumericalError(f"non-finite value of {name} at the test point")
    (analytic,) = torch.autograd.grad(value, target)
    analytic = analytic.reshape(-1)

    n = target.numel()
    gen = torch.Generator().manual_seed(seed)
    coords = torch.randperm(n, generator=gen)[: min(n, max_coords)]

    flat = target.detach().reshape(-1)
    max_rel = 0.0
    with torch.no_grad():
        for idx in coords.tolist():
            orig = flat[idx].item()
            flat[idx] = orig + step
            up = f(params).item()
            flat[idx] = orig - step
            down = f(params).item()
            flat[idx] = orig
            g_fd = (up - down) / (2 * step)
            g_a = analytic[idx].item()
            rel = abs(g_a - g_fd) / (abs(g_a) + abs(g_fd) + 1e-8)
            max_rel = max(max_rel, rel)

    return GradCheckReport(
        name=name,
        max_rel_error=max_rel,
        tolerance=tol,
        n_coords=len(coords),
        passed=max_rel <= tol,
    )
