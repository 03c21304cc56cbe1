import pytest

from offloadsim.engine import TICKS_PER_SECOND, simulate
from offloadsim.errors import DeadlockError, MemoryCapacityError
from offloadsim.hardware import Direction
from offloadsim.schedule import MemEffect, ResourceId, Task, TaskGraph, TaskKind

from conftest import hand_hw

HW = hand_hw(4)  # bw_gpu 16e9; SSD 2.4e10 read, 1.2e10 write


def transfer(i, res, size, deps=(), direction=None, effects=()):
    return Task(i, f"t{i}", TaskKind.TRANSFER, res, size, tuple(deps), tuple(effects), direction=direction)


def graph(tasks, cap=None, base=None):
    cap = cap or {ResourceId.MEM_GPU: 1e12, ResourceId.MEM_CPU: 1e12}
    return TaskGraph(list(tasks), cap, base or {}, {})


def test_single_transfer():
    trace = simulate(graph([transfer(0, ResourceId.LINK_C2G, 2e9)]), HW)
    assert trace.makespan == 0.125
    assert trace.makespan_tick == TICKS_PER_SECOND // 8


def test_simplex_ssd_serializes():
    size = 0.1 * 2.4e10
    g = graph([transfer(0, ResourceId.LINK_SSD, size, direction=Direction.S2C),
               transfer(1, ResourceId.LINK_SSD, size, direction=Direction.S2C)])
    trace = simulate(g, HW)
    assert trace.makespan == pytest.approx(0.2, abs=1e-12)
    first, second = trace.events
    assert (first.task_id, second.task_id) == (0, 1)
    assert second.start_tick == first.end_tick


def test_duplex_gpu_link_overlaps():
    size = 0.1 * 16e9
    g = graph([transfer(0, ResourceId.LINK_C2G, size), transfer(1, ResourceId.LINK_G2C, size)])
    assert simulate(g, HW).makespan == pytest.approx(0.1, abs=1e-12)


def test_empty_graph():
    trace = simulate(graph([]), HW)
    assert trace.makespan == 0 and trace.events == []


def test_dependencies_and_fifo_order():
    # task 2 is ready at t=0 but has a larger id than 1, both on C2G
    g = graph([
        transfer(0, ResourceId.LINK_G2C, 16e9),
        transfer(2, ResourceId.LINK_C2G, 16e9),
        transfer(1, ResourceId.LINK_C2G, 16e9),
        transfer(3, ResourceId.LINK_C2G, 16e9, deps=[0]),
    ])
    ev = {e.task_id: e for e in simulate(g, HW).events}
    assert ev[1].start == 0 and ev[2].start == 1.0
    # task 3 became ready at 1.0, after task 2 queued at 0.0
    assert ev[3].start == 2.0


def test_compute_and_cpu_rates():
    g = graph([
        Task(0, "c", TaskKind.COMPUTE, ResourceId.GPU_COMPUTE, HW.gpu_tput * 0.3),
        Task(1, "u", TaskKind.OPTIMIZER_UPDATE, ResourceId.CPU_COMPUTE, 1e9, (0,)),
    ])
    trace = simulate(g, HW)
    assert trace.makespan == pytest.approx(0.8, abs=1e-12)
    assert trace.busy[ResourceId.CPU_COMPUTE] == pytest.approx(0.5)


def test_memory_accounting_and_peak():
    G = ResourceId.MEM_GPU
    tasks = [
        transfer(0, ResourceId.LINK_C2G, 8e9, effects=[MemEffect(G, 8e9, "start")]),
        transfer(1, ResourceId.LINK_G2C, 8e9, deps=[0], effects=[MemEffect(G, -8e9, "end")]),
    ]
    trace = simulate(graph(tasks, cap={G: 10e9}, base={G: 1e9}), HW)
    assert trace.peak_mem[G] == 9e9
    assert trace.mem_timeline[G][-1][1] == 1e9


def test_memory_overflow_aborts():
    G = ResourceId.MEM_GPU
    tasks = [transfer(0, ResourceId.LINK_C2G, 8e9, effects=[MemEffect(G, 8e9, "start")])]
    with pytest.raises(MemoryCapacityError) as err:
        simulate(graph(tasks, cap={G: 5e9}), HW)
    assert err.value.task_id == 0


def test_frees_apply_before_allocations_at_same_tick():
    G = ResourceId.MEM_GPU
    tasks = [
        transfer(0, ResourceId.LINK_C2G, 16e9, effects=[MemEffect(G, 4e9, "start"), MemEffect(G, -4e9, "end")]),
        transfer(1, ResourceId.LINK_G2C, 16e9, effects=[MemEffect(G, 1e9, "end")]),
    ]
    # both end at t=1; without ordering the +1e9 could land on top of the 4e9
    trace = simulate(graph(tasks, cap={G: 4.5e9}), HW)
    assert trace.peak_mem[G] == 4e9


def test_deadlock_reports_blocked_tasks():
    tasks = [transfer(0, ResourceId.LINK_C2G, 1.0, deps=[1]), transfer(1, ResourceId.LINK_C2G, 1.0, deps=[0])]
    with pytest.raises(DeadlockError) as err:
        simulate(graph(tasks), HW)
    assert err.value.blocked == ["t0", "t1"]


def test_zero_work_tasks():
    tasks = [transfer(0, ResourceId.LINK_C2G, 0.0), transfer(1, ResourceId.LINK_C2G, 0.0, deps=[0]),
             transfer(2, ResourceId.LINK_C2G, 16e9, deps=[1])]
    assert simulate(graph(tasks), HW).makespan == 1.0


def test_repeatable():
    tasks = [transfer(i, ResourceId.LINK_SSD, 1e9 * (i + 1), direction=Direction.C2S) for i in range(5)]
    a = simulate(graph(tasks), HW)
    b = simulate(graph(tasks), HW)
    assert a.events == b.events and a.makespan_tick == b.makespan_tick
