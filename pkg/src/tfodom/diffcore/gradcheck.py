"""Finite-difference validation of analytic gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tape, Tensor, backward

__all__ = ["grad_check"]


def grad_check(program, inputs, step: float = 1e-3, sample_per_input: int | None = None,
               rng: np.random.Generator | None = None) -> float:
    """Compare reverse-mode gradients of ``program`` against central differences.

    ``program(*inputs)`` must be deterministic and return a scalar Tensor;
    ``inputs`` are leaf tensors with ``requires_grad=True``. Returns the max
    over checked coordinates of ``|analytic - numeric| / max(1, |numeric|)``.

    ``sample_per_input`` limits the finite-difference probes to that many
    coordinates per input (seeded), which keeps large models tractable;
    the analytic side always comes from one full backward pass.
    """
    inputs = list(inputs)
    for i, t in enumerate(inputs):
        if not isinstance(t, Tensor) or not t.requires_grad:
            raise ValueError(f"grad_check: input {i} is not a requires_grad Tensor")
        t.zero_grad()

    with Tape():
        loss = program(*inputs)
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ValueError("grad_check: program must return a scalar Tensor")
    if not np.isfinite(loss.data).all():
        raise FloatingPointError(f"grad_check: non-finite loss from node {loss.name!r}")
    backward(loss)

    def eval_loss() -> float:
        out = program(*inputs)
        v = float(out.data.reshape(()))
        if not np.isfinite(v):
            raise FloatingPointError(f"grad_check: non-finite perturbed loss from node {out.name!r}")
        return v

    if rng is None:
        rng = np.random.default_rng(0)

    max_err = 0.0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        if not np.isfinite(analytic).all():
            raise FloatingPointError(f"grad_check: non-finite gradient at leaf {t.name!r}")
        flat = t.data.reshape(-1)
        n = flat.size
        if sample_per_input is None or sample_per_input >= n:
            coords = range(n)
        else:
            coords = rng.choice(n, size=sample_per_input, replace=False)
        a_flat = analytic.reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + step
            f_plus = eval_loss()
            flat[c] = orig - step
            f_minus = eval_loss()
            flat[c] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            err = abs(float(a_flat[c]) - numeric) / max(1.0, abs(numeric))
            if err > max_err:
                max_err = err
    return max_err
