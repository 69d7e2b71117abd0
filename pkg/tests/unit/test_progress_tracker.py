"""
Unit tests for optimizer traces
"""

from utils.progress_tracker import TRACE_HEADER, TrainingTrace


class TestTrainingTrace:
    """Test recording, merging and saving traces"""

    def test_record_and_objectives(self):
        trace = TrainingTrace("unit")
        trace.mark_evaluation(3)
        trace.record(1, -5.0, 2.0, 1.0)
        trace.record(2, -4.0, 1.0, 0.5)
        assert trace.objectives == [-5.0, -4.0]
        assert trace.stats.iterations == 2
        assert trace.stats.evaluations == 3
        assert "iteration 2" in trace.get_progress_string()

    def test_extend_renumbers(self):
        first, second = TrainingTrace("a"), TrainingTrace("b")
        first.record(1, -3.0, 1.0, 1.0)
        second.record(1, -2.0, 1.0, 1.0)
        second.record(2, -1.0, 1.0, 1.0)
        first.extend(second)
        assert [r.iteration for r in first.records] == [1, 2, 3]
        assert first.stats.iterations == 3

    def test_finish_saves_trace_file(self, tmp_path):
        path = tmp_path / "traces" / "run.txt"
        trace = TrainingTrace("saved", trace_file=path)
        trace.record(1, -1.5, 0.25, 1.0)
        trace.finish(converged=True)
        lines = path.read_text().splitlines()
        assert lines[0] == TRACE_HEADER
        assert lines[1].startswith("1 -1.5 0.25 1.0 ")
        assert trace.stats.converged

    def test_empty_trace(self):
        trace = TrainingTrace("empty")
        assert trace.objectives == []
        assert trace.get_progress_string() == "empty: Starting..."
        assert trace.format_lines() == [TRACE_HEADER]
