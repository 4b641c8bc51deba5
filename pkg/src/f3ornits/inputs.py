"""Build the input polynomial a consumer integrates over its next window.

Three stages, applied in order:

1. resolve which published producer polynomial covers the window start (the
   latest one whose own window began at or before it — asynchronous consumers
   may therefore read an extension past the producer's planned refresh);
2. cap the degree to what the consumer can integrate, by re-fitting a
   constrained least-squares polynomial through samples of the source across
   the window, exact at the window-start value;
3. optionally blend C1-continuously from the previously *used* input
   polynomial into the capped plan with a two-point Hermite, so consecutive
   windows chain without value or slope jumps.

Capping happens before smoothing: the blend must honor the consumer's degree
budget, which smoothing itself raises to three.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Sequence

from .errors import SequencingError
from .poly import Polynomial, fit_hermite, _fit_constrained


@dataclass(frozen=True)
class SmoothingContext:
    """Value and slope of the previously used input plan at its window end."""

    value: float
    slope: float


@dataclass(frozen=True)
class InputPlan:
    """Final polynomial for one consumer input over one window."""

    poly: Polynomial
    window_start: float
    window_end: float
    source_index: int
    smoothed: bool


def resolve_source(publish_times: Sequence[float], t_start: float) -> int:
    """Index of the newest published polynomial whose window began <= t_start."""
    m = bisect_right(publish_times, t_start) - 1
    if m < 0:
        raise SequencingError(
            f"no published polynomial covers t = {t_start!r} "
            f"(first publication at {publish_times[0]!r})"
            if publish_times
            else f"no published polynomial covers t = {t_start!r}"
        )
    return m


def cap_degree(
    source: Polynomial,
    max_degree: int,
    window_start: float,
    window_end: float,
) -> Polynomial:
    """Reduce the source to the consumer's degree budget over the window.

    A source already within budget passes through unchanged.  Otherwise the
    source is sampled at max_degree + 2 equispaced times across the window
    and refit by constrained least squares, exact at the window-start value
    so the hand-over point is preserved.
    """
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    if source.degree <= max_degree:
        return source
    if window_end <= window_start:
        raise SequencingError(
            f"empty capping window [{window_start!r}, {window_end!r}]"
        )
    n = max_degree + 2
    span = window_end - window_start
    times = tuple(window_start + span * i / (n - 1) for i in range(n))
    values = tuple(source(t) for t in times)
    return _fit_constrained(times, values, max_degree, 0)


def smooth(
    plan: Polynomial,
    window_start: float,
    window_end: float,
    ctx: SmoothingContext,
) -> Polynomial:
    """Hermite blend from the previous plan's end state into this plan's end.

    The right constraints are the unsmoothed plan's value and slope at the
    window end, so the blended input lands exactly where the plan would have;
    the left constraints come from the context, giving C1 continuity with
    whatever was actually integrated before.
    """
    dplan = plan.derivative()
    return fit_hermite(
        window_start,
        window_end,
        ctx.value,
        plan(window_end),
        ctx.slope,
        dplan(window_end),
    )


def build_plan(
    publish_times: Sequence[float],
    polys: Sequence[Polynomial],
    window_start: float,
    window_end: float,
    max_degree: int,
    smoothing: bool,
    smoothing_capable: bool,
    ctx: SmoothingContext | None,
) -> tuple[InputPlan, SmoothingContext]:
    """Assemble one input plan and the context for the window after it.

    Smoothing is skipped (plan passes through capped-only) on the first
    window, when disabled, or when the consumer cannot take cubics; the
    returned context always reflects the polynomial actually delivered.
    """
    m = resolve_source(publish_times, window_start)
    p = cap_degree(polys[m], max_degree, window_start, window_end)
    smoothed = False
    if smoothing and smoothing_capable and ctx is not None:
        p = smooth(p, window_start, window_end, ctx)
        smoothed = True
    new_ctx = SmoothingContext(value=p(window_end), slope=p.derivative()(window_end))
    plan = InputPlan(
        poly=p,
        window_start=window_start,
        window_end=window_end,
        source_index=m,
        smoothed=smoothed,
    )
    return plan, new_ctx
