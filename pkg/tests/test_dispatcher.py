import logging

import pytest

from mcsdispatch.channels import ChannelClass, Message, MsgType, NotificationChannel, TaskQueue
from mcsdispatch.dispatcher import (FLAG_DISPATCH, FLAG_SWITCH, Anomaly, Dispatch, Dispatcher,
                                    LoopClock, ModeChange, PRIORITIES)
from mcsdispatch.model import Job, JobState
from mcsdispatch.timing import TimingParams

from helpers import HIGH, LOW, fft, pf, pool3

O_SWITCH = 25_000
LOOP = 3788


def make(tasks, tiles=None, n_param=1, o_switch=O_SWITCH):
    queues = {p: TaskQueue(p, 16) for p in PRIORITIES}
    channels = {p: NotificationChannel(ChannelClass.for_level(p)) for p in PRIORITIES}
    return Dispatcher({t.id: t for t in tasks}, tiles or pool3(), queues, channels,
                      TimingParams.defaults(), o_switch, n_param)


def arrive(d, job, now=0):
    d.queues[job.criticality].enqueue(job, now)
    d.channels[job.criticality].send(Message(0, MsgType.TASK_ARRIVAL, job.task_id, job), now)


def test_switch_fires_exactly_one_iteration_early():
    d = make([pf(1)])
    job = Job.release(pf(1), 0, 1)
    d.on_arrival(job)
    t_switch = 25_000_000 - O_SWITCH
    assert d.check_context_switch(t_switch - LOOP) is None
    change = d.check_context_switch(t_switch - LOOP + 1)
    assert change == ModeChange(HIGH, change.reason) and d.mode is HIGH


def test_dispatched_job_cancels_its_switch_time():
    d = make([pf(1)])
    job = Job.release(pf(1), 0, 1)
    d.on_arrival(job)
    job.advance(JobState.DISPATCHED)
    assert d.check_context_switch(10**9) is None
    assert d.mode is LOW


def test_first_fit_by_ascending_tile_id():
    d = make([fft(3)])
    assert d.try_dispatch(Job.release(fft(3), 0, 1)).id == 2
    d.state.tile_view[2] = object()
    assert d.try_dispatch(Job.release(fft(3), 0, 1)).id == 3
    d.state.tile_view[3] = object()
    assert d.try_dispatch(Job.release(fft(3), 0, 1)) is None


def test_high_mode_reassigns_shared_tile():
    d = make([pf(1), fft(3)])
    d.state.mode.enter_high()
    d.state.tile_view[1] = object()
    assert d.try_dispatch(Job.release(pf(1), 0, 1)).id == 2
    assert d.try_dispatch(Job.release(fft(3), 0, 1)).id == 3


def test_step_dispatches_high_before_low_and_serializes_copies():
    d = make([pf(1), fft(3)])
    hi, lo = Job.release(pf(1), 0, 1), Job.release(fft(3), 0, 1)
    arrive(d, hi)
    arrive(d, lo)
    # notifications are drained in a first iteration
    r0 = d.step(100)
    assert r0.actions == [] and r0.duration == LOOP
    r1 = d.step(200)
    dispatches = [a for a in r1.actions if isinstance(a, Dispatch)]
    assert [(a.job, a.tile) for a in dispatches] == [(hi, 1), (lo, 2)]
    assert dispatches[0].copy_start == 200
    assert dispatches[0].copy_end == 200 + d.copy(16384)
    assert dispatches[1].copy_start == dispatches[0].copy_end
    assert r1.flags & FLAG_DISPATCH[HIGH] and r1.flags & FLAG_DISPATCH[LOW]
    assert r1.duration == max(LOOP, dispatches[1].copy_end - 200)


def test_step_reports_switch_flag():
    d = make([pf(1)])
    d.on_arrival(Job.release(pf(1), 0, 1))
    r = d.step(25_000_000)
    assert r.flags & FLAG_SWITCH
    assert isinstance(r.actions[0], ModeChange)


def test_countdown_returns_to_low_after_n_completions():
    d = make([pf(1)], n_param=2)
    d.state.mode.enter_high()
    jobs = []
    for seq in range(2):
        job = Job.release(pf(1), seq, pf(1).t_eet)
        d.running[job.key] = 1
        jobs.append(job)
    assert d.on_completion(Message(0, MsgType.TASK_COMPLETE, 1, jobs[0]), 0) == []
    actions = d.on_completion(Message(0, MsgType.TASK_COMPLETE, 1, jobs[1]), 0)
    assert actions and actions[0].mode is LOW
    assert d.mode is LOW


def test_overrunning_completion_resets_countdown():
    d = make([pf(1)], n_param=1)
    d.state.mode.enter_high()
    job = Job.release(pf(1), 0, pf(1).t_eet + 1)
    d.running[job.key] = 1
    assert d.on_completion(Message(0, MsgType.TASK_COMPLETE, 1, job), 0) == []
    assert d.mode is HIGH


def test_unknown_completion_is_logged_and_ignored(caplog):
    d = make([pf(1)])
    stray = Job.release(pf(1), 5, 1)
    with caplog.at_level(logging.WARNING):
        actions = d.on_completion(Message(0, MsgType.TASK_COMPLETE, 1, stray), 0)
    assert actions == [Anomaly("UnknownJob", 1, 5)]
    assert "unknown job" in caplog.text
    assert d.state.tile_view == {1: None, 2: None, 3: None}


def test_empty_iteration_uses_worst_case_loop():
    d = make([pf(1)])
    r = d.step(0)
    assert r.flags == 0 and r.actions == [] and r.duration == LOOP


def test_next_interesting_points_at_switch_lookahead():
    d = make([pf(1)])
    d.on_arrival(Job.release(pf(1), 0, 1))
    assert d.next_interesting(0) == 25_000_000 - O_SWITCH - LOOP + 1


def test_constant_clock_fast_forward():
    clock = LoopClock(TimingParams.defaults())
    assert clock.first_wake_at_or_after(100, 100) == (100, 0)
    assert clock.first_wake_at_or_after(100, 101) == (100 + LOOP, 1)
    assert clock.first_wake_at_or_after(0, 3 * LOOP) == (3 * LOOP, 3)


def test_stochastic_clock_needs_rng():
    from mcsdispatch.timing import LoopTimeModel
    params = TimingParams.defaults(loop_model=LoopTimeModel("uniform", 100, 200))
    with pytest.raises(ValueError):
        LoopClock(params)
