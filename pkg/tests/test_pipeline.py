"""流水线图测试"""

from unittest.mock import MagicMock, patch

from agents.pipeline import route_after_prepare, run_pipeline
from agents.workflow import CONFIG_COPY, RunContext
from utils.config import RunConfig, Settings

STAGES = ["synth", "pretrain", "train", "clean", "eval", "experiment"]


class TestPipeline:
    """LangGraph 流水线测试"""

    def setup_method(self):
        self.mocks = {name: MagicMock(return_value=name + "-done") for name in STAGES}
        self.patchers = [patch(f"agents.pipeline.cmd_{name}", self.mocks[name]) for name in STAGES]
        for patcher in self.patchers:
            patcher.start()

    def teardown_method(self):
        for patcher in self.patchers:
            patcher.stop()

    def _context(self, out):
        return RunContext(config=RunConfig(), out=out, settings=Settings())

    def test_runs_all_stages_in_order(self, tmp_path):
        state = run_pipeline(self._context(tmp_path))
        assert state["completed"] == ["prepare", "synth", "pretrain", "train", "clean", "evaluate", "experiment"]
        assert state["results"]["evaluate"] == "eval-done"
        assert (tmp_path / CONFIG_COPY).exists()
        for mock in self.mocks.values():
            mock.assert_called_once()

    def test_existing_dataset_skips_synth(self, tmp_path):
        (tmp_path / "dataset").mkdir()
        state = run_pipeline(self._context(tmp_path))
        assert state["skip_synth"] is True
        assert "synth" not in state["completed"]
        self.mocks["synth"].assert_not_called()
        self.mocks["pretrain"].assert_called_once()

    def test_route_after_prepare(self):
        assert route_after_prepare({"skip_synth": True}) == "pretrain"
        assert route_after_prepare({"skip_synth": False}) == "synth"
