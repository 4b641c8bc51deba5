"""Per-output polynomial order selection and estimated-output calibration.

After a macro step delivers a fresh output sample, every candidate order q is
scored by how well an exact extrapolation through the q+1 previous samples
would have predicted the new one.  The winning order is then used to
calibrate the polynomial consumers will read on the *next* window (one-step
delay), either as a plain extrapolation or as a least-squares fit constrained
at the newest sample.  The returned polynomial is a global extension: it can
be evaluated anywhere, which is what allows asynchronous consumers to overrun
and the step controller to measure prediction errors.
"""

from __future__ import annotations

from dataclasses import dataclass

from .coupling import SampleHistory
from .poly import (
    CalibrationPoints,
    Polynomial,
    fit_constrained_least_squares,
    fit_extrapolation,
)
from .subsystem import MAX_ORDER

CALIBRATION_MODES = ("extrapolation", "cls")


@dataclass(frozen=True)
class OrderDecision:
    """Chosen order for the upcoming window plus the per-candidate scores."""

    order: int
    candidate_errors: dict[int, float]
    valid_from: float


@dataclass(frozen=True)
class EstimatedOutput:
    """Polynomial extension published at `start`, of the decided order."""

    poly: Polynomial
    start: float
    order: int
    mode: str


def admissible_orders(history_len: int) -> range:
    """Candidate orders given how many past samples exist (before the new one)."""
    if history_len < 1:
        raise ValueError("order selection needs at least one past sample")
    return range(0, min(MAX_ORDER, history_len - 1) + 1)


def select_order(
    history: SampleHistory,
    t_new: float,
    y_new: float,
    force: int | None = None,
) -> OrderDecision:
    """Score each admissible order against the fresh sample and pick the best.

    Candidate q is calibrated on the q+1 most recent history samples (the new
    one excluded) and judged by |y_new - prediction(t_new)|.  Ties break
    toward the smallest order.  `force` overrides the choice (clamped to the
    admissible range) while still reporting the scores.
    """
    errors: dict[int, float] = {}
    best_q = 0
    best_err = None
    for q in admissible_orders(len(history)):
        times, values = history.newest(q + 1)
        p = fit_extrapolation(CalibrationPoints(times, values))
        err = abs(y_new - p(t_new))
        errors[q] = err
        if best_err is None or err < best_err:
            best_q, best_err = q, err
    if force is not None:
        best_q = min(max(force, 0), max(errors))
    return OrderDecision(order=best_q, candidate_errors=errors, valid_from=t_new)


def estimate_output(
    history: SampleHistory,
    decision: OrderDecision,
    mode: str = "extrapolation",
) -> EstimatedOutput:
    """Calibrate the polynomial consumers will read until the next exchange.

    The history must already contain the newest sample.  Extrapolation mode
    interpolates the q+1 most recent samples; cls mode fits the q+2 most
    recent, exact at the newest.  If the history is too short for cls (only
    possible when callers drive this directly with a stale decision) it falls
    back to extrapolation at the same order.
    """
    if mode not in CALIBRATION_MODES:
        raise ValueError(f"unknown calibration mode {mode!r}")
    q = decision.order
    used_mode = mode
    if mode == "cls" and len(history) >= q + 2:
        times, values = history.newest(q + 2)
        p = fit_constrained_least_squares(CalibrationPoints(times, values))
    else:
        used_mode = "extrapolation"
        times, values = history.newest(q + 1)
        p = fit_extrapolation(CalibrationPoints(times, values))
    return EstimatedOutput(
        poly=p, start=history.last_time(), order=q, mode=used_mode
    )
