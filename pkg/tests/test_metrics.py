import pytest

from g2moduli.infra.metrics import REGISTRY, average_time, measure_time, recent_timings, write_metrics


def test_measure_time_records_each_call():
    """Test of stage timings"""
    @measure_time('test_stage')
    def stage(x):
        return 2 * x

    before = REGISTRY.get_sample_value('g2moduli_stage_seconds_count', {'stage': 'test_stage'}) or 0.0
    assert stage(3) == 6
    assert stage(4) == 8
    after = REGISTRY.get_sample_value('g2moduli_stage_seconds_count', {'stage': 'test_stage'})
    assert after == before + 2
    assert average_time('test_stage') >= 0.0
    assert 'test_stage' in recent_timings()


def test_measure_time_counts_failures():
    """Test of the failure counter"""
    @measure_time('failing_stage')
    def stage():
        raise ValueError('boom')

    with pytest.raises(ValueError):
        stage()
    assert REGISTRY.get_sample_value('g2moduli_stage_failures_total', {'stage': 'failing_stage'}) == 1.0


def test_average_of_unknown_stage():
    """Test of a stage that never ran"""
    assert average_time('never_ran') == 0.0


def test_write_metrics(tmp_path):
    """Test of the Prometheus text file"""
    @measure_time('written_stage')
    def stage():
        return None

    stage()
    path = tmp_path / 'metrics.prom'
    write_metrics(str(path))
    text = path.read_text()
    assert 'g2moduli_stage_seconds_bucket' in text
    assert 'stage="written_stage"' in text
