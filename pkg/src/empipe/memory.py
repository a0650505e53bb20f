"""Application-wide memory accounting and per-phase memory distribution.

Each node in a phase asks for between ``a`` and ``b`` bytes with priority
``c``.  For a scale factor ``lam`` the node receives
``max(a, min(b, lam * c))`` bytes; the distributor picks the largest ``lam``
whose total still fits in the memory available to the phase.
"""
import math
import threading
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .errors import BudgetExceededError, InsufficientMemoryError


class _Unbounded:
    """Maximum memory marker meaning "as much as possible"."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNBOUNDED"

    def __reduce__(self):
        return (_Unbounded, ())


UNBOUNDED = _Unbounded()


@dataclass(frozen=True)
class MemoryRequest:
    minimum_bytes: int = 0
    maximum_bytes: object = 0  # int or UNBOUNDED
    priority: object = 1

    def __post_init__(self):
        if self.minimum_bytes < 0:
            raise ValueError("minimum_bytes must be nonnegative")
        if self.maximum_bytes is not UNBOUNDED:
            if self.maximum_bytes < 0:
                raise ValueError("maximum_bytes must be nonnegative or UNBOUNDED")
            if self.maximum_bytes < self.minimum_bytes:
                raise ValueError(
                    f"maximum_bytes {self.maximum_bytes} is below "
                    f"minimum_bytes {self.minimum_bytes}"
                )
        if not self.priority > 0:
            raise ValueError("priority must be positive")

    @property
    def unbounded(self):
        return self.maximum_bytes is UNBOUNDED

    def grant(self, lam):
        """Memory for this request at scale ``lam``, before rounding."""
        share = lam * self.priority
        if self.maximum_bytes is not UNBOUNDED and share > self.maximum_bytes:
            share = self.maximum_bytes
        return share if share > self.minimum_bytes else self.minimum_bytes


@dataclass
class MemoryAssignment:
    lam: Fraction
    grants: dict = field(default_factory=dict)
    total: int = 0


def _normalize(requests):
    if isinstance(requests, Mapping):
        return list(requests.items())
    return list(enumerate(requests))


def total_assigned(requests, lam):
    """Total memory handed out at scale ``lam`` (unrounded)."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    return sum(req.grant(lam) for _, req in _normalize(requests))


def _exact_lambda(reqs, available, lo, hi):
    # Solve the linear piece of the total-memory curve that contains the
    # bracket exactly, so grants land on whole bytes when the answer is
    # rational (bisection alone only approaches it from below).
    mid = (lo + hi) / 2
    fixed = Fraction(0)
    slope = Fraction(0)
    for req in reqs:
        share = mid * req.priority
        if share <= req.minimum_bytes:
            fixed += req.minimum_bytes
        elif req.maximum_bytes is not UNBOUNDED and share >= req.maximum_bytes:
            fixed += req.maximum_bytes
        else:
            slope += Fraction(req.priority)
    if slope == 0:
        return None
    lam = (available - fixed) / slope
    if lam < 0 or lam + Fraction(1, 2**20) < Fraction(lo):
        return None
    if sum(req.grant(lam) for req in reqs) > available:
        return None
    return lam


def _exact(req):
    if isinstance(req.priority, (int, Fraction)):
        return req
    return replace(req, priority=Fraction(req.priority))


def assign_memory(requests, available, max_iterations=64):
    """Distribute ``available`` bytes over ``requests``.

    ``requests`` is a mapping of node id to :class:`MemoryRequest` or a plain
    sequence (ids are then positions).  Grants are floored to whole bytes and
    leftover slack is not redistributed.

    Raises :class:`InsufficientMemoryError` when the minimums do not fit.
    """
    items = _normalize(requests)
    if not items:
        return MemoryAssignment(Fraction(0), {}, 0)
    reqs = [_exact(req) for _, req in items]
    need = sum(req.minimum_bytes for req in reqs)
    if need > available:
        raise InsufficientMemoryError(need, available)

    csum = float(sum(req.priority for req in reqs))
    lo = 0.0
    hi = (available + need + 1) / float(min(req.priority for req in reqs))

    if total_assigned(reqs, hi) <= available:
        # every request is saturated at its (finite) maximum
        lam = Fraction(hi)
    else:
        for _ in range(max_iterations):
            mid = (lo + hi) / 2
            if mid <= lo or mid >= hi or (hi - lo) * csum < 1e-9:
                break
            if total_assigned(reqs, mid) <= available:
                lo = mid
            else:
                hi = mid
        lam = _exact_lambda(reqs, available, lo, hi)
        if lam is None:
            lam = Fraction(lo)

    grants = {}
    for (key, _), req in zip(items, reqs):
        grants[key] = math.floor(req.grant(lam))
    return MemoryAssignment(lam, grants, sum(grants.values()))


class MemoryLedger:
    """Thread-safe running total of registered allocations against a limit.

    The executor reserves each phase's granted memory up front.  While a
    reservation is open, registrations (stream buffers opened by the phase's
    nodes) draw on it first, since that memory is part of the node grants.
    """

    def __init__(self, limit_bytes):
        if limit_bytes <= 0:
            raise ValueError("limit_bytes must be positive")
        self.limit_bytes = limit_bytes
        self.used_bytes = 0
        self._pool = 0    # reserved and not yet drawn
        self._drawn = 0   # reserved and drawn by registrations
        self._lock = threading.Lock()

    def register_allocation(self, nbytes):
        with self._lock:
            take = min(nbytes, self._pool)
            rest = nbytes - take
            remaining = self.limit_bytes - self.used_bytes
            if rest > remaining:
                raise BudgetExceededError(nbytes, remaining + self._pool)
            self._pool -= take
            self._drawn += take
            self.used_bytes += rest

    def release_allocation(self, nbytes):
        with self._lock:
            back = min(nbytes, self._drawn)
            rest = nbytes - back
            if rest > self.used_bytes - self._pool - self._drawn:
                raise ValueError(
                    f"releasing {nbytes} bytes but only {self.used_bytes} registered"
                )
            self._drawn -= back
            self._pool += back
            self.used_bytes -= rest

    def reserve(self, nbytes):
        """Set aside ``nbytes`` for the allocations of one phase."""
        with self._lock:
            if self._pool or self._drawn:
                raise RuntimeError("a reservation is already open")
            remaining = self.limit_bytes - self.used_bytes
            if nbytes > remaining:
                raise BudgetExceededError(nbytes, remaining)
            self.used_bytes += nbytes
            self._pool = nbytes

    def end_reservation(self):
        """Return the undrawn part; allocations still held become ordinary ones."""
        with self._lock:
            self.used_bytes -= self._pool
            self._pool = self._drawn = 0

    def available_memory(self):
        return self.limit_bytes - self.used_bytes

    def set_limit(self, limit_bytes):
        with self._lock:
            if limit_bytes < self.used_bytes:
                raise BudgetExceededError(self.used_bytes, limit_bytes)
            self.limit_bytes = limit_bytes


DEFAULT_LIMIT = 1 << 30

_ledger = MemoryLedger(DEFAULT_LIMIT)


def default_ledger():
    return _ledger


def register_allocation(nbytes):
    _ledger.register_allocation(nbytes)


def release_allocation(nbytes):
    _ledger.release_allocation(nbytes)


def available_memory():
    return _ledger.available_memory()


def set_memory_limit(limit_bytes):
    _ledger.set_limit(limit_bytes)
