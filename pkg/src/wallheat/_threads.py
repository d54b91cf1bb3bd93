"""BLAS threading control for the dense likelihood loops.

The marginalization works on matrices of a few hundred rows, far below the
size where threaded BLAS pays for its synchronization; on throttled or
shared machines the spin-waits can cost an order of magnitude.  Compute
loops therefore pin BLAS to one thread and leave parallelism to the caller
(independent starts, seeds and windows)."""

from __future__ import annotations

from contextlib import contextmanager


@contextmanager
def single_thread_blas():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover - threadpoolctl ships with scipy stacks
        yield
        return
    with threadpool_limits(limits=1, user_api="blas"):
        yield
