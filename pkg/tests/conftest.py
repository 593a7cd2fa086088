import random

import pytest

from pagecachesim import PolicyHooks, Simulator, Verdict, IterOptions


class RecordingPolicy(PolicyHooks):
    """Keeps one FIFO list and logs every hook invocation. Its eviction
    proposals come from the list head, so with it attached the simulator
    behaves like FIFO while tests observe the hook traffic."""

    name = "recording"

    def __init__(self):
        self.calls = []

    def policy_init(self, cg):
        self.cg = cg
        self.queue = cg.list_create()
        self.calls.append(("init", None))

    def folio_added(self, folio):
        self.cg.list_add(self.queue, folio.id, tail=True)
        self.calls.append(("added", folio.id))

    def folio_accessed(self, folio):
        self.calls.append(("accessed", folio.id))

    def folio_removed(self, folio):
        self.calls.append(("removed", folio.id))

    def evict_folios(self, ctx, cg):
        cg.list_iterate(self.queue, lambda pos, folio: Verdict.EVICT,
                        IterOptions(), ctx)

    def of_kind(self, kind):
        return [fid for k, fid in self.calls if k == kind]


@pytest.fixture
def recording_policy():
    return RecordingPolicy()


def make_sim(limit_pages, policy=None, cgroup=0, **kwargs):
    sim = Simulator(**kwargs)
    sim.add_cgroup(cgroup, limit_pages)
    if policy is not None:
        sim.attach_policy(cgroup, policy)
    return sim


def random_accesses(rng: random.Random, count, files=4, pages_per_file=64,
                    locality=0.5):
    """Random page keys with a revisit bias so traces mix hits and misses."""
    out = []
    for _ in range(count):
        if out and rng.random() < locality:
            out.append(rng.choice(out))
        else:
            out.append((rng.randrange(files), rng.randrange(pages_per_file)))
    return out
