"""Eviction policies built on the policy hook and eviction-list API.

Six policies ship here. FIFO and MRU are pure list-order policies. LFU
and GET-SCAN use batch scoring over a bounded scan window: the lowest
frequency folios among the first N list nodes become candidates, so they
approximate LFU rather than tracking a global minimum. S3-FIFO filters
one-hit wonders through a small probation queue with a ghost table of
recently evicted keys, and LHD ranks folios by the expected hits per unit
of remaining lifetime of their age/class cohort, using integer fixed-point
statistics throughout.
"""

from __future__ import annotations

from collections import OrderedDict

from .policy_api import (
    DEFAULT_SCAN_LIMIT,
    Disposition,
    IterMode,
    IterOptions,
    PolicyCgroup,
    PolicyHooks,
    RemovalReason,
    Verdict,
)


class FifoPolicy(PolicyHooks):
    """Evict in insertion order; accesses never reorder anything."""

    name = "fifo"

    def __init__(self, scan_limit: int = DEFAULT_SCAN_LIMIT):
        self._opts = IterOptions(scan_limit=scan_limit)

    def policy_init(self, cg: PolicyCgroup):
        self.cg = cg
        self.queue = cg.list_create()

    def folio_added(self, folio):
        self.cg.list_add(self.queue, folio.id, tail=True)

    def evict_folios(self, ctx, cg):
        cg.list_iterate(self.queue, _evict_all, self._opts, ctx)


def _evict_all(pos, folio):
    return Verdict.EVICT


class MruPolicy(PolicyHooks):
    """Evict the most recently used folios first.

    Insertions and accesses both go to the list head; eviction walks from
    the head. The first ``skip`` folios are passed over so that pages still
    being used to service the current request are not proposed immediately
    after insertion.
    """

    name = "mru"

    def __init__(self, skip: int = 32, scan_limit: int = DEFAULT_SCAN_LIMIT):
        if skip < 0:
            raise ValueError("skip must be >= 0")
        self._opts = IterOptions(scan_limit=scan_limit, skip=skip)

    def policy_init(self, cg: PolicyCgroup):
        self.cg = cg
        self.stack = cg.list_create()

    def folio_added(self, folio):
        self.cg.list_add(self.stack, folio.id, tail=False)

    def folio_accessed(self, folio):
        self.cg.list_move(self.stack, folio.id, tail=False)

    def evict_folios(self, ctx, cg):
        cg.list_iterate(self.stack, _evict_all, self._opts, ctx)


class LfuPolicy(PolicyHooks):
    """Approximate LFU: score the first N list nodes by access frequency
    and evict the least-frequently used among that batch."""

    name = "lfu"

    def __init__(self, scan_window: int = DEFAULT_SCAN_LIMIT):
        self._opts = IterOptions(mode=IterMode.SCORE, scan_limit=scan_window)

    def policy_init(self, cg: PolicyCgroup):
        self.cg = cg
        self.queue = cg.list_create()
        self.freq: dict[int, int] = {}

    def folio_added(self, folio):
        self.cg.list_add(self.queue, folio.id, tail=True)
        self.freq[folio.id] = 1

    def folio_accessed(self, folio):
        self.freq[folio.id] += 1

    def evict_folios(self, ctx, cg):
        freq = self.freq
        cg.list_iterate(self.queue,
                        lambda pos, folio: freq[folio.id],
                        self._opts, ctx)

    def folio_removed(self, folio):
        self.freq.pop(folio.id, None)


class S3FifoPolicy(PolicyHooks):
    """S3-FIFO: small and main FIFO queues plus a ghost table.

    New folios enter the small queue unless their (file, offset) key is in
    the ghost table, in which case they skip straight to the main queue.
    Access frequency is tracked per folio, capped at 3 so bursts cannot pin
    a folio forever. When the small queue is over its target share, its
    folios are either promoted to the main queue (frequency above 1) or
    proposed for eviction and rotated to the small tail. Otherwise the main
    queue is scanned in up to four passes with rising frequency thresholds;
    every examined folio has its frequency decremented and is rotated to
    the tail. Evicted folios leave a ghost entry keyed by (file, offset),
    since folio ids are not stable across evictions; the ghost table is
    bounded and drops its least recently touched key when full.
    """

    name = "s3fifo"

    FREQ_CAP = 3

    def __init__(self, small_fraction: float = 0.10,
                 ghost_capacity: int | None = None,
                 scan_limit: int = DEFAULT_SCAN_LIMIT):
        if not 0.0 < small_fraction < 1.0:
            raise ValueError("small_fraction must be in (0, 1)")
        self.small_fraction = small_fraction
        self._ghost_capacity = ghost_capacity
        self._scan_limit = scan_limit

    def policy_init(self, cg: PolicyCgroup):
        self.cg = cg
        self.small = cg.list_create()
        self.main = cg.list_create()
        self.freq: dict[int, int] = {}
        self.ghost: OrderedDict = OrderedDict()
        if self._ghost_capacity is None:
            self._ghost_capacity = cg.limit_pages

    def folio_added(self, folio):
        fid = folio.id
        self.freq[fid] = 0
        key = (folio.file, folio.offset)
        if key in self.ghost:
            del self.ghost[key]
            self.cg.list_add(self.main, fid, tail=True)
        else:
            self.cg.list_add(self.small, fid, tail=True)

    def folio_accessed(self, folio):
        fid = folio.id
        f = self.freq[fid]
        if f < self.FREQ_CAP:
            self.freq[fid] = f + 1

    def evict_folios(self, ctx, cg):
        small_len = cg.list_length(self.small)
        total = small_len + cg.list_length(self.main)
        if total == 0:
            return
        if small_len > self.small_fraction * total:
            self._scan_small(ctx, cg)
        else:
            self._scan_main(ctx, cg)

    def _scan_small(self, ctx, cg):
        freq = self.freq
        opts = IterOptions(scan_limit=self._scan_limit,
                           disposition=Disposition.MOVE_TO_LIST,
                           target_list=self.main)

        def judge(pos, folio):
            if freq[folio.id] > 1:
                return Verdict.KEEP  # promoted to the main tail
            return Verdict.EVICT_AND_MOVE_TAIL

        cg.list_iterate(self.small, judge, opts, ctx)

    def _scan_main(self, ctx, cg):
        freq = self.freq
        opts = IterOptions(scan_limit=self._scan_limit,
                           disposition=Disposition.MOVE_TO_TAIL)
        for threshold in range(self.FREQ_CAP + 1):
            if ctx.room() <= 0:
                break

            def judge(pos, folio, t=threshold):
                fid = folio.id
                f = freq[fid]
                if f > 0:
                    freq[fid] = f - 1
                if f <= t:
                    return Verdict.EVICT_AND_MOVE_TAIL
                return Verdict.KEEP

            cg.list_iterate(self.main, judge, opts, ctx)

    def folio_removed(self, folio):
        self.freq.pop(folio.id, None)
        if self.cg.removal_reason is RemovalReason.EVICTED:
            ghost = self.ghost
            key = (folio.file, folio.offset)
            if key in ghost:
                ghost.move_to_end(key)
            else:
                ghost[key] = None
                if len(ghost) > self._ghost_capacity:
                    ghost.popitem(last=False)


class LhdPolicy(PolicyHooks):
    """Least hit density: evict the folios least likely to produce hits
    per unit of cache time they would keep occupying.

    Folios fall into classes by how long ago their last hit happened
    (class 0 holds never-hit folios). Each class keeps hit and eviction
    counts per coarsened age bucket. From those, a periodic reconfiguration
    computes a hit density per (class, age): the probability of a hit at or
    beyond that age divided by the expected remaining lifetime. Eviction
    scores each scanned folio with the published density of its current
    class and age; lowest density goes first, and with no recorded events
    all densities are zero so eviction degenerates to list order.

    Reconfiguration runs from the deferred-work slot between trace events,
    never on the access path, after every ``reconfig_interval`` admissions.
    It first ages all counters with an EWMA decay of 0.9 and then
    recomputes densities. All statistics are 64-bit fixed point (scaled by
    2**20); nothing here uses floating point.
    """

    name = "lhd"

    NUM_CLASSES = 16
    MAX_AGE = 256
    SCALE = 1 << 20
    EWMA_NUM, EWMA_DEN = 9, 10
    INT64_MAX = (1 << 63) - 1

    def __init__(self, reconfig_interval: int = 1 << 20,
                 age_granularity: int | None = None,
                 scan_window: int = DEFAULT_SCAN_LIMIT):
        if reconfig_interval < 1:
            raise ValueError("reconfig_interval must be >= 1")
        self.reconfig_interval = reconfig_interval
        self._age_granularity = age_granularity
        self._opts = IterOptions(mode=IterMode.SCORE, scan_limit=scan_window)

    def policy_init(self, cg: PolicyCgroup):
        self.cg = cg
        self.queue = cg.list_create()
        # fid -> [last_access_tick, age bucket at last hit, hit count]
        self.meta: dict[int, list[int]] = {}
        n, m = self.NUM_CLASSES, self.MAX_AGE
        self.hits = [[0] * m for _ in range(n)]
        self.evictions = [[0] * m for _ in range(n)]
        self.hit_density = [[0] * m for _ in range(n)]
        self.tick = 0
        self.admissions_since_reconfig = 0
        if self._age_granularity is None:
            self._age_granularity = max(1, cg.limit_pages // self.MAX_AGE)

    def _bucket(self, age: int) -> int:
        b = age // self._age_granularity
        return b if b < self.MAX_AGE - 1 else self.MAX_AGE - 1

    def _classify(self, meta) -> int:
        if meta[2] == 0:
            return 0
        c = (meta[1] + 1).bit_length()  # 1 + floor(log2(age + 1))
        return c if c < self.NUM_CLASSES else self.NUM_CLASSES - 1

    def folio_added(self, folio):
        self.tick += 1
        self.meta[folio.id] = [self.tick, 0, 0]
        self.cg.list_add(self.queue, folio.id, tail=True)
        self.admissions_since_reconfig += 1

    def folio_accessed(self, folio):
        self.tick += 1
        m = self.meta[folio.id]
        age = self._bucket(self.tick - m[0])
        self.hits[self._classify(m)][age] += self.SCALE
        m[0] = self.tick
        m[1] = age
        m[2] += 1

    def evict_folios(self, ctx, cg):
        meta = self.meta
        density = self.hit_density
        tick = self.tick
        gran = self._age_granularity
        top = self.MAX_AGE - 1
        top_class = self.NUM_CLASSES - 1

        def score(pos, folio, _meta=meta, _density=density):
            # _classify and _bucket inlined; this runs once per scanned
            # node on every eviction round
            m = _meta[folio.id]
            b = (tick - m[0]) // gran
            if b > top:
                b = top
            if m[2] == 0:
                return _density[0][b]
            c = (m[1] + 1).bit_length()
            if c > top_class:
                c = top_class
            return _density[c][b]

        cg.list_iterate(self.queue, score, self._opts, ctx)

    def folio_removed(self, folio):
        m = self.meta.pop(folio.id, None)
        if m is not None and self.cg.removal_reason is RemovalReason.EVICTED:
            age = self._bucket(self.tick - m[0])
            self.evictions[self._classify(m)][age] += self.SCALE

    def run_deferred(self):
        if self.admissions_since_reconfig >= self.reconfig_interval:
            self.reconfigure()

    def reconfigure(self):
        """Age the statistics and republish hit densities.

        Per class, walking ages from oldest to youngest keeps suffix sums of
        hits, of all events, and of lifetime-weighted events, so each age's
        density is hit_suffix * SCALE // lifetime_suffix. Touches no
        per-folio metadata.
        """
        self.admissions_since_reconfig = 0
        num, den = self.EWMA_NUM, self.EWMA_DEN
        scale = self.SCALE
        cap = self.INT64_MAX
        for c in range(self.NUM_CLASSES):
            hits = self.hits[c]
            evictions = self.evictions[c]
            density = self.hit_density[c]
            for a in range(self.MAX_AGE):
                hits[a] = hits[a] * num // den
                evictions[a] = evictions[a] * num // den
            hit_suffix = 0
            event_suffix = 0
            lifetime_suffix = 0
            for a in range(self.MAX_AGE - 1, -1, -1):
                hit_suffix += hits[a]
                event_suffix += hits[a] + evictions[a]
                lifetime_suffix += event_suffix
                if event_suffix == 0:
                    density[a] = 0
                else:
                    d = hit_suffix * scale // lifetime_suffix
                    density[a] = d if d < cap else cap


class GetScanPolicy(PolicyHooks):
    """Application-informed policy for mixed point-read and scan traffic.

    Folios inserted by threads in ``scan_threads`` go on a scan list, all
    others on a get list; the inserting thread is read from the cgroup
    handle at insertion time. Both lists keep approximate-LFU frequencies,
    and eviction drains the scan list first so scan traffic cannot push
    point-query folios out of the cache.
    """

    name = "getscan"

    def __init__(self, scan_threads=(), scan_window: int = DEFAULT_SCAN_LIMIT):
        self.scan_threads = frozenset(scan_threads)
        self._opts = IterOptions(mode=IterMode.SCORE, scan_limit=scan_window)

    def policy_init(self, cg: PolicyCgroup):
        self.cg = cg
        self.get_list = cg.list_create()
        self.scan_list = cg.list_create()
        self.freq: dict[int, int] = {}

    def folio_added(self, folio):
        if self.cg.current_thread in self.scan_threads:
            target = self.scan_list
        else:
            target = self.get_list
        self.cg.list_add(target, folio.id, tail=True)
        self.freq[folio.id] = 1

    def folio_accessed(self, folio):
        self.freq[folio.id] += 1

    def evict_folios(self, ctx, cg):
        freq = self.freq
        score = lambda pos, folio: freq[folio.id]  # noqa: E731
        cg.list_iterate(self.scan_list, score, self._opts, ctx)
        if ctx.room() > 0:
            cg.list_iterate(self.get_list, score, self._opts, ctx)

    def folio_removed(self, folio):
        self.freq.pop(folio.id, None)


#: Policy names accepted by the harness. "default" means no policy.
POLICY_NAMES = ("default", "fifo", "mru", "lfu", "s3fifo", "lhd", "getscan")


def make_policy(name: str, params: dict | None = None,
                scan_window: int = DEFAULT_SCAN_LIMIT) -> PolicyHooks | None:
    """Build a policy by name. Returns None for "default".

    ``params`` accepts, per policy: mru ``skip``; s3fifo ``small_fraction``
    and ``ghost_capacity``; lhd ``reconfig_interval`` and
    ``age_granularity``; getscan ``scan_threads`` (an iterable of thread
    ids). Unknown names or parameters raise ValueError.
    """
    params = dict(params or {})

    def take(*names):
        return {k: params.pop(k) for k in names if k in params}

    if name == "default":
        policy = None
    elif name == "fifo":
        policy = FifoPolicy(scan_limit=scan_window)
    elif name == "mru":
        policy = MruPolicy(scan_limit=scan_window, **take("skip"))
    elif name == "lfu":
        policy = LfuPolicy(scan_window=scan_window)
    elif name == "s3fifo":
        policy = S3FifoPolicy(scan_limit=scan_window,
                              **take("small_fraction", "ghost_capacity"))
    elif name == "lhd":
        policy = LhdPolicy(scan_window=scan_window,
                           **take("reconfig_interval", "age_granularity"))
    elif name == "getscan":
        policy = GetScanPolicy(scan_window=scan_window,
                               **take("scan_threads"))
    else:
        raise ValueError("unknown policy %r (expected one of %s)"
                         % (name, ", ".join(POLICY_NAMES)))
    if params:
        raise ValueError("unknown parameters for policy %r: %s"
                         % (name, ", ".join(sorted(params))))
    return policy
