"""Lock-free primitives callable from numba ``nogil`` code.

The float add is a compare-and-exchange retry loop over the 64-bit pattern
of the target double, so concurrent addends to one component are never
lost.  Integer helpers back the round-robin ticket and the per-variable
spinlocks used by the locking baselines.
"""
import ctypes
import ctypes.util

import numpy as np
from llvmlite import ir
from numba import njit, types
from numba.core import cgutils
from numba.extending import intrinsic

_libc = ctypes.CDLL(ctypes.util.find_library("c"))

_sched_yield = _libc.sched_yield
_sched_yield.restype = ctypes.c_int
_sched_yield.argtypes = []

_clock_gettime = _libc.clock_gettime
_clock_gettime.restype = ctypes.c_int
_clock_gettime.argtypes = [ctypes.c_int, ctypes.c_void_p]

_CLOCK_MONOTONIC = 1

# spins before a waiter gives up its timeslice; keeps busy waits bounded
# when there are more runnable threads than cores
SPINS_BEFORE_YIELD = 64

_I64 = ir.IntType(64)
_F64 = ir.DoubleType()


def _element_ptr(context, builder, arrty, arr, idx):
    ary = context.make_array(arrty)(context, builder, arr)
    return cgutils.get_item_pointer(context, builder, arrty, ary, [idx],
                                    wraparound=False)


@intrinsic
def atomic_add_f64(typingctx, arr, idx, val):
    """``arr[idx] += val`` atomically; returns the value before the add."""
    if not (isinstance(arr, types.Array) and arr.dtype == types.float64):
        return None
    sig = types.float64(arr, idx, types.float64)

    def codegen(context, builder, signature, args):
        val = context.cast(builder, args[2], signature.args[2], types.float64)
        ptr = _element_ptr(context, builder, signature.args[0], args[0], args[1])
        iptr = builder.bitcast(ptr, _I64.as_pointer())
        first = builder.load_atomic(iptr, "monotonic", 8)
        entry = builder.basic_block
        loop = builder.append_basic_block("cas.retry")
        done = builder.append_basic_block("cas.done")
        builder.branch(loop)
        builder.position_at_end(loop)
        expected = builder.phi(_I64)
        expected.add_incoming(first, entry)
        updated = builder.fadd(builder.bitcast(expected, _F64), val)
        pair = builder.cmpxchg(iptr, expected, builder.bitcast(updated, _I64),
                               "acq_rel", "monotonic")
        seen = builder.extract_value(pair, 0)
        swapped = builder.extract_value(pair, 1)
        expected.add_incoming(seen, builder.basic_block)
        builder.cbranch(swapped, done, loop)
        builder.position_at_end(done)
        return builder.bitcast(expected, _F64)

    return sig, codegen


@intrinsic
def atomic_load_f64(typingctx, arr, idx):
    if not (isinstance(arr, types.Array) and arr.dtype == types.float64):
        return None
    sig = types.float64(arr, idx)

    def codegen(context, builder, signature, args):
        ptr = _element_ptr(context, builder, signature.args[0], args[0], args[1])
        raw = builder.load_atomic(builder.bitcast(ptr, _I64.as_pointer()),
                                  "monotonic", 8)
        return builder.bitcast(raw, _F64)

    return sig, codegen


@intrinsic
def atomic_load_i64(typingctx, arr, idx):
    if not (isinstance(arr, types.Array) and arr.dtype == types.int64):
        return None
    sig = types.int64(arr, idx)

    def codegen(context, builder, signature, args):
        ptr = _element_ptr(context, builder, signature.args[0], args[0], args[1])
        return builder.load_atomic(ptr, "acquire", 8)

    return sig, codegen


@intrinsic
def atomic_store_i64(typingctx, arr, idx, val):
    if not (isinstance(arr, types.Array) and arr.dtype == types.int64):
        return None
    sig = types.void(arr, idx, types.int64)

    def codegen(context, builder, signature, args):
        val = context.cast(builder, args[2], signature.args[2], types.int64)
        ptr = _element_ptr(context, builder, signature.args[0], args[0], args[1])
        builder.store_atomic(val, ptr, "release", 8)
        return context.get_dummy_value()

    return sig, codegen


@intrinsic
def cas_i64(typingctx, arr, idx, expected, new):
    """Compare-and-swap on an int64 slot; True when the swap happened."""
    if not (isinstance(arr, types.Array) and arr.dtype == types.int64):
        return None
    sig = types.boolean(arr, idx, types.int64, types.int64)

    def codegen(context, builder, signature, args):
        exp = context.cast(builder, args[2], signature.args[2], types.int64)
        new = context.cast(builder, args[3], signature.args[3], types.int64)
        ptr = _element_ptr(context, builder, signature.args[0], args[0], args[1])
        pair = builder.cmpxchg(ptr, exp, new, "acq_rel", "monotonic")
        return builder.extract_value(pair, 1)

    return sig, codegen


@njit(nogil=True)
def cpu_yield():
    _sched_yield()


@njit(nogil=True)
def monotonic_ns(buf):
    """Monotonic clock in nanoseconds; ``buf`` is a 2-slot int64 scratch."""
    _clock_gettime(_CLOCK_MONOTONIC, buf.ctypes.data)
    return buf[0] * 1000000000 + buf[1]


@njit(nogil=True)
def busy_wait(ns, buf):
    if ns <= 0:
        return
    start = monotonic_ns(buf)
    while monotonic_ns(buf) - start < ns:
        pass


@njit(nogil=True)
def spin_lock(locks, v):
    """Acquire spinlock ``v``; returns the number of failed attempts."""
    waits = 0
    while not cas_i64(locks, v, 0, 1):
        waits += 1
        if waits % SPINS_BEFORE_YIELD == 0:
            cpu_yield()
    return waits


@njit(nogil=True)
def spin_unlock(locks, v):
    atomic_store_i64(locks, v, 0)


def clock_scratch():
    return np.zeros(2, dtype=np.int64)
