import pytest
from hypothesis import given, strategies as st

from mcsdispatch.channels import (ChannelClass, ChannelFull, MemoryBank, Message, MsgType,
                                  NotificationChannel, PlacementInfeasible, QueueFull, StreamMerger,
                                  TaskQueue, check_bank_placement)
from mcsdispatch.model import Job, Tile

from helpers import HIGH, LOW, fft, pf, pool3, task


def test_message_is_two_packets_with_tlast_on_payload():
    msg = Message(3, MsgType.TASK_COMPLETE, 42)
    (h, l0), (p, l1) = msg.packets()
    assert (l0, l1) == (False, True)
    assert p == 42
    assert h & 0x1F == 3
    assert (h >> 12) & 0b111 == MsgType.TASK_COMPLETE
    assert bin(h).count("1") % 2 == 1


def test_parity_error_detected():
    (h, l0), payload = Message(1, MsgType.TASK_ARRIVAL, 7).packets()
    with pytest.raises(ValueError, match="parity"):
        Message.decode([(h ^ 1, l0), payload])


def test_decode_rejects_bad_framing():
    packets = Message(1, MsgType.TASK_START, 7).packets()
    with pytest.raises(ValueError):
        Message.decode(packets[:1])
    with pytest.raises(ValueError):
        Message.decode([(packets[0][0], True), packets[1]])


def test_message_field_ranges():
    with pytest.raises(ValueError):
        Message(32, MsgType.TASK_ARRIVAL, 1)
    with pytest.raises(ValueError):
        Message(1, MsgType.TASK_ARRIVAL, 1 << 32)


@given(st.integers(0, 31), st.sampled_from(list(MsgType)), st.integers(0, 2**32 - 1))
def test_message_roundtrip(route, mtype, task_id):
    msg = Message(route, mtype, task_id)
    assert Message.decode(msg.packets()) == msg


def test_channel_is_fifo_with_latency():
    ch = NotificationChannel(ChannelClass.HIGH_PRIORITY, hop_latency=8)
    assert ch.send(Message(0, MsgType.TASK_ARRIVAL, 1), 100) == 109
    # same-cycle sends serialize one cycle apart
    assert ch.send(Message(0, MsgType.TASK_ARRIVAL, 2), 100) == 110
    assert ch.pop_ready(108) is None
    assert ch.pop_ready(109).task_id == 1
    assert ch.pop_ready(200).task_id == 2
    assert ch.pop_ready(300) is None


def test_channel_full():
    ch = NotificationChannel(ChannelClass.CONTROL, capacity=1)
    ch.send(Message(0, MsgType.MODE_NOTICE, 0), 0)
    with pytest.raises(ChannelFull):
        ch.send(Message(0, MsgType.MODE_NOTICE, 0), 0)
    assert ch.rejected == 1


def test_queue_front_buffer_promotion():
    q = TaskQueue(HIGH, capacity=2, promote_cycles=50)
    a, b = Job.release(pf(1), 0, 1), Job.release(pf(1), 1, 1)
    assert q.enqueue(a, 0) == 50
    assert q.enqueue(b, 10) is None
    assert q.pop_front(49) is None
    assert q.pop_front(50) is a
    # promotion of b starts at the pop
    assert q.front_ready_at == 100
    assert q.pop_front(100) is b
    assert q.pop_front(1000) is None


def test_queue_overflow_counts_drop():
    q = TaskQueue(LOW, capacity=1)
    q.enqueue(Job.release(fft(3), 0, 1), 0)
    with pytest.raises(QueueFull):
        q.enqueue(Job.release(fft(3), 1, 1), 0)
    assert (q.offered, q.dropped, len(q)) == (2, 1, 1)


def test_merger_rotates():
    m = StreamMerger()
    assert m.order([5, 3, 4]) == [3, 4, 5]
    assert m.order([3, 4, 5]) == [4, 5, 3]
    assert m.order([3, 4, 5]) == [5, 3, 4]
    assert m.order([3, 4, 5]) == [3, 4, 5]
    assert m.order([]) == []


def test_merger_is_fair_over_many_rounds():
    m = StreamMerger()
    first = [m.order([1, 2, 3])[0] for _ in range(300)]
    assert [first.count(s) for s in (1, 2, 3)] == [100, 100, 100]


def test_bank_lock_blocks_second_holder():
    bank = MemoryBank(0)
    assert bank.acquire(1, 100, 0).granted
    grant = bank.acquire(2, 10, 50)
    assert not grant.granted and grant.until == 100
    assert bank.acquire(2, 10, 100).granted
    assert bank.history == [(1, 0, 100), (2, 100, 110)]


def test_bank_arbitration_lowest_entity_wins():
    grants = MemoryBank(0).arbitrate([(3, 5), (1, 5)], 0)
    assert grants[1].granted and not grants[3].granted


def test_case_study_bank_placement_golden(casestudy):
    assert check_bank_placement(casestudy.tasks, casestudy.tiles) == {1: 0, 2: 1, 3: 2, 4: 3, 5: 4}


def test_nine_parallel_tasks_do_not_fit_eight_banks():
    tiles = [Tile(i, {LOW}, {LOW}) for i in range(1, 10)]
    tasks = [task(i, LOW, 0.1, 0.1, 1) for i in range(1, 10)]
    with pytest.raises(PlacementInfeasible):
        check_bank_placement(tasks, tiles)
    assert len(set(check_bank_placement(tasks[:8], tiles).values())) == 8


def test_tasks_confined_to_one_tile_may_share_a_bank():
    tiles = [Tile(1, {HIGH}, {HIGH}), Tile(2, {LOW}, {LOW})]
    placement = check_bank_placement([pf(1), pf(2), fft(3)], tiles, banks=2)
    assert placement[1] == placement[2] != placement[3]


def test_placement_never_shares_between_parallel_tasks(casestudy):
    placement = check_bank_placement(casestudy.tasks, pool3())
    assert len(set(placement.values())) == len(placement)
