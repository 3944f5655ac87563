import io

import pytest
from conftest import job

from gpusim.adapters import merge_attempts, philly_node_series, read_helios_jobs, read_helios_vc_config
from gpusim.trace import JobStatus, TraceFormatError

HELIOS = """job_id,user,vc,jobname,gpu_num,cpu_num,node_num,state,submit_time,start_time,end_time,duration
1,uA,vc1,train_a,8,32,1,COMPLETED,2020-09-01 08:00:00,2020-09-01 08:00:10,2020-09-01 09:00:10,3600
2,uB,vc2,eval,0,4,1,CANCELLED,2020-09-01 08:05:00,2020-09-01 08:05:00,2020-09-01 08:05:30,30
3,uA,vc1,train_b,2,8,1,TIMEOUT,2020-09-01 08:10:00,,,120
4,uC,vc1,x,1,1,1,PENDING,2020-09-01 08:10:00,,,0
1,uA,vc1,dup,1,1,1,COMPLETED,2020-09-01 08:11:00,,,5
"""


def test_read_helios_jobs_local_time():
    jobs, rejects = read_helios_jobs(io.StringIO(HELIOS), tz_offset=8 * 3600)
    assert [j.job_id for j in jobs] == ["1", "2", "3"]
    a = jobs[0]
    # 08:00 at UTC+8 is 00:00 UTC
    assert a.submit_time == 1_598_918_400 and a.start_time == a.submit_time + 10
    assert a.end_time - a.start_time == a.duration == 3600
    assert (a.user, a.vc, a.job_name, a.gpu_num, a.cpu_num) == ("uA", "vc1", "train_a", 8, 32)
    assert jobs[1].status is JobStatus.CANCELED and jobs[2].status is JobStatus.FAILED
    assert jobs[2].start_time is None and jobs[2].duration == 120
    assert [r.line for r in rejects] == [5, 6]
    assert "duplicate" in rejects[1].reason


def test_read_helios_numeric_times_and_missing_columns():
    text = "jobid,gpus,status,submit,duration\nx,4,completed,100,50\n"
    jobs, rejects = read_helios_jobs(io.StringIO(text))
    assert not rejects and jobs[0].submit_time == 100 and jobs[0].gpu_num == 4
    with pytest.raises(TraceFormatError):
        read_helios_jobs(io.StringIO("jobid,status\nx,completed\n"))


def test_duration_is_authoritative():
    text = ("job_id,gpu_num,state,submit_time,start_time,end_time,duration\n"
            "z,1,COMPLETED,0,10,70,50\n")
    jobs, _ = read_helios_jobs(io.StringIO(text))
    assert (jobs[0].start_time, jobs[0].end_time, jobs[0].duration) == (10, 60, 50)


def test_vc_config():
    vcs = read_helios_vc_config(io.StringIO("vc,num\nvc1,12\nvc2,3\n"), effective_from=99)
    assert [(v.vc, v.node_count, v.effective_from) for v in vcs] == [("vc1", 12, 99), ("vc2", 3, 99)]
    with pytest.raises(TraceFormatError):
        read_helios_vc_config(io.StringIO("vc,size\nvc1,12\n"))


def test_philly_node_series():
    text = ("time,machine_id,gpu0_util,gpu1_util\n"
            "0,m1,50,0\n0,m2,0,0\n60,m1,0,0\n60,m2,10,90\n"
            "180,m1,5,5\n")
    s = philly_node_series(io.StringIO(text), total_nodes=3)
    assert s.start == 0 and s.total.tolist() == [3, 3, 3, 3]
    assert s.running.tolist() == [1, 1, 0, 1]  # minute 120 missing counts as idle
    assert philly_node_series(io.StringIO(text), busy_threshold=20).running.tolist() == [1, 1, 0, 0]
    with pytest.raises(TraceFormatError):
        philly_node_series(io.StringIO("time,machine_id,mem\n0,m1,3\n"))


def test_merge_attempts():
    jobs = [job("j#0", 0, 2, 30, status=JobStatus.FAILED), job("k", 5, 1, 10),
            job("j#1", 40, 2, 70), job("m#0", 9, 4, 3)]
    out = merge_attempts(jobs)
    assert [j.job_id for j in out] == ["j", "k", "m"]
    j = out[0]
    assert (j.submit_time, j.duration, j.status, j.gpu_num) == (0, 100, JobStatus.COMPLETED, 2)
    assert out[1] is jobs[1]
