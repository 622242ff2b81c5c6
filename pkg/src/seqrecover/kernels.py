"""Hot loops for the recovery procedures.

Every kernel exists twice: a per-component loop compiled with numba, and a
vectorised numpy version that walks all live components in lock step. The
numba path is used when numba imports and ``SEQRECOVER_DISABLE_NUMBA`` is
unset (or "0"); set it to "1" to force the numpy path.

Randomness is counter based. Observation ``j`` of component ``i`` on pass
``k`` is a pure function of ``(seed, i, k, j)`` built from the SplitMix64
finaliser, so results do not depend on evaluation order or on the backend.

Model encoding passed to kernels: ``kind`` is GAUSSIAN or BERNOULLI and
``params`` is a float64[4]:

* GAUSSIAN: ``[theta, theta**2 / 2, 0, 0]``
* BERNOULLI: ``[p0, p1, llr(0), llr(1)]``
"""

import math
import os

import numpy as np

GAUSSIAN = 0
BERNOULLI = 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_GOLDEN2 = np.uint64(0xD1B54A32D192ED03)
_SEED_SALT = np.uint64(0x5851F42D4C957F2D)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_ONE = np.uint64(1)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_INV53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * math.pi


def _env_disabled() -> bool:
    return os.environ.get("SEQRECOVER_DISABLE_NUMBA", "0").strip().lower() in (
        "1",
        "true",
        "yes",
    )


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _env_disabled()


def backend() -> str:
    """Name of the backend the public kernels dispatch to."""
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# counter-based stream: shared source, compiled separately per backend
# ---------------------------------------------------------------------------


def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _seed_key(seed):
    return _mix(seed ^ _SEED_SALT)


def _component_key(seed_key, component):
    return _mix(seed_key + (component + _ONE) * _GOLDEN)


def _pass_key(component_key, pass_index):
    return _mix(component_key + (pass_index + _ONE) * _GOLDEN2)


def _draw_bits(key, counter):
    return _mix(key + (counter + _ONE) * _GOLDEN)


if HAVE_NUMBA:
    _jit = numba.njit(nogil=True, cache=True)
    _mix_nb = _jit(_mix)

    @_jit
    def _seed_key_nb(seed):
        return _mix_nb(seed ^ _SEED_SALT)

    @_jit
    def _component_key_nb(seed_key, component):
        return _mix_nb(seed_key + (component + _ONE) * _GOLDEN)

    @_jit
    def _pass_key_nb(component_key, pass_index):
        return _mix_nb(component_key + (pass_index + _ONE) * _GOLDEN2)

    @_jit
    def _draw_bits_nb(key, counter):
        return _mix_nb(key + (counter + _ONE) * _GOLDEN)

    @_jit
    def _uniform_nb(key, counter):
        return float(_draw_bits_nb(key, counter) >> _S11) * _INV53

    @_jit
    def _observe_nb(kind, params, alt, key, j):
        # j-th observation of one stream
        if kind == GAUSSIAN:
            c = np.uint64(2 * j)
            u1 = (float(_draw_bits_nb(key, c) >> _S11) + 1.0) * _INV53
            u2 = float(_draw_bits_nb(key, c + _ONE) >> _S11) * _INV53
            z = math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)
            if alt:
                return params[0] + z
            return z
        p = params[1] if alt else params[0]
        return 1.0 if _uniform_nb(key, np.uint64(j)) < p else 0.0

    @_jit
    def _threshold_passes_nb(kind, params, alt, seed, passes, block, gamma):
        n = alt.shape[0]
        counts = np.zeros(n, np.int64)
        survived = np.zeros(n, np.int64)
        stats = np.full((n, passes), np.nan)
        skey = _seed_key_nb(seed)
        for i in range(n):
            ckey = _component_key_nb(skey, np.uint64(i))
            for k in range(passes):
                key = _pass_key_nb(ckey, np.uint64(k))
                counts[i] += block
                acc = 0.0
                for j in range(block):
                    acc += _observe_nb(kind, params, alt[i], key, j)
                if kind == GAUSSIAN:
                    t = params[0] * (acc / block) - params[1]
                else:
                    t = (acc * params[3] + (block - acc) * params[2]) / block
                stats[i, k] = t
                if t > gamma:
                    survived[i] += 1
                else:
                    break
        return counts, survived, stats

    @_jit
    def _sprt_nb(kind, params, alt, seed, lower, upper, max_steps):
        n = alt.shape[0]
        counts = np.zeros(n, np.int64)
        llr = np.zeros(n)
        skey = _seed_key_nb(seed)
        for i in range(n):
            key = _pass_key_nb(_component_key_nb(skey, np.uint64(i)), np.uint64(0))
            lam = 0.0
            j = 0
            while j < max_steps and lower < lam < upper:
                y = _observe_nb(kind, params, alt[i], key, j)
                if kind == GAUSSIAN:
                    lam += params[0] * y - params[1]
                elif y > 0.5:
                    lam += params[3]
                else:
                    lam += params[2]
                j += 1
            counts[i] = j
            llr[i] = lam
        return counts, llr


# ---------------------------------------------------------------------------
# numpy path
# ---------------------------------------------------------------------------


def _observe_np(kind, params, alt, keys, j):
    if kind == GAUSSIAN:
        c = np.uint64(2 * j)
        u1 = ((_draw_bits(keys, c) >> _S11).astype(np.float64) + 1.0) * _INV53
        u2 = (_draw_bits(keys, c + _ONE) >> _S11).astype(np.float64) * _INV53
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)
        return np.where(alt, params[0] + z, z)
    u = (_draw_bits(keys, np.uint64(j)) >> _S11).astype(np.float64) * _INV53
    p = np.where(alt, params[1], params[0])
    return (u < p).astype(np.float64)


def _threshold_passes_np(kind, params, alt, seed, passes, block, gamma):
    n = alt.shape[0]
    counts = np.zeros(n, np.int64)
    survived = np.zeros(n, np.int64)
    stats = np.full((n, passes), np.nan)
    with np.errstate(over="ignore"):
        ckeys = _component_key(_seed_key(np.uint64(seed)), np.arange(n, dtype=np.uint64))
        live = np.arange(n)
        for k in range(passes):
            if live.size == 0:
                break
            keys = _pass_key(ckeys[live], np.uint64(k))
            a = alt[live]
            counts[live] += block
            acc = np.zeros(live.size)
            for j in range(block):
                acc += _observe_np(kind, params, a, keys, j)
            if kind == GAUSSIAN:
                t = params[0] * (acc / block) - params[1]
            else:
                t = (acc * params[3] + (block - acc) * params[2]) / block
            stats[live, k] = t
            keep = t > gamma
            live = live[keep]
            survived[live] += 1
    return counts, survived, stats


def _sprt_np(kind, params, alt, seed, lower, upper, max_steps):
    n = alt.shape[0]
    counts = np.zeros(n, np.int64)
    llr = np.zeros(n)
    with np.errstate(over="ignore"):
        keys = _pass_key(
            _component_key(_seed_key(np.uint64(seed)), np.arange(n, dtype=np.uint64)),
            np.uint64(0),
        )
        live = np.arange(n)
        for j in range(max_steps):
            if live.size == 0:
                break
            y = _observe_np(kind, params, alt[live], keys[live], j)
            if kind == GAUSSIAN:
                step = params[0] * y - params[1]
            else:
                step = np.where(y > 0.5, params[3], params[2])
            lam = llr[live] + step
            llr[live] = lam
            counts[live] += 1
            live = live[(lower < lam) & (lam < upper)]
    return counts, llr


def observations(kind, params, alt, seed, component, pass_index, count):
    """Regenerate the first ``count`` observations a kernel sees for one stream.

    Pure numpy; intended for audits and tests, not for bulk simulation.
    """
    with np.errstate(over="ignore"):
        ckey = _component_key(_seed_key(np.uint64(seed)), np.uint64(component))
        key = np.asarray([_pass_key(ckey, np.uint64(pass_index))], dtype=np.uint64)
        flag = np.asarray([bool(alt)])
        return np.array([_observe_np(kind, params, flag, key, j)[0] for j in range(count)])


IMPLEMENTATIONS = {"numpy": {"threshold_passes": _threshold_passes_np, "sprt": _sprt_np}}
if HAVE_NUMBA:
    IMPLEMENTATIONS["numba"] = {"threshold_passes": _threshold_passes_nb, "sprt": _sprt_nb}


def _prep(params, alt, seed):
    return (
        np.ascontiguousarray(params, dtype=np.float64),
        np.ascontiguousarray(alt, dtype=np.bool_),
        np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF),
    )


def threshold_passes(kind, params, alt, seed, passes, block, gamma, impl=None):
    """Run up to ``passes`` block-threshold passes over every component.

    A component stays live while its per-pass block statistic exceeds
    ``gamma``. Returns ``(counts, survived, stats)``: measurements taken,
    passes survived, and the statistic of every pass actually run (NaN for
    passes after elimination).
    """
    params, alt, seed = _prep(params, alt, seed)
    fn = IMPLEMENTATIONS[impl or backend()]["threshold_passes"]
    return fn(int(kind), params, alt, seed, int(passes), int(block), float(gamma))


def sprt(kind, params, alt, seed, lower, upper, max_steps, impl=None):
    """Cumulative-LLR walk per component until it leaves (lower, upper).

    Returns ``(stopping_times, final_llr)``.
    """
    params, alt, seed = _prep(params, alt, seed)
    fn = IMPLEMENTATIONS[impl or backend()]["sprt"]
    return fn(int(kind), params, alt, seed, float(lower), float(upper), int(max_steps))
