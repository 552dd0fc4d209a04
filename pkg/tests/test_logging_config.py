"""日志配置与并发工具测试"""

import json
import logging

from utils.config import Settings
from utils.logging_config import LOG_FILE, setup_logging
from utils.parallel import ordered_map


class TestLoggingConfig:
    """日志配置测试"""

    def teardown_method(self):
        root = logging.getLogger()
        for handler in list(root.handlers):
            handler.close()
            root.removeHandler(handler)

    def test_json_lines_written_to_run_log(self, tmp_path):
        path = setup_logging(Settings(log_format="json"), tmp_path)
        logging.getLogger("dsgan.test").info("清洗完成")
        for handler in logging.getLogger().handlers:
            handler.flush()

        assert path == tmp_path / LOG_FILE
        record = json.loads(path.read_text(encoding="utf-8").strip().splitlines()[-1])
        assert record["message"] == "清洗完成"
        assert record["levelname"] == "INFO"
        assert record["name"] == "dsgan.test"

    def test_text_format_level(self, tmp_path):
        path = setup_logging(Settings(log_level="WARNING"), tmp_path)
        logging.getLogger("dsgan.test").info("hidden")
        logging.getLogger("dsgan.test").warning("shown")
        for handler in logging.getLogger().handlers:
            handler.flush()
        text = path.read_text(encoding="utf-8")
        assert "shown" in text
        assert "hidden" not in text

    def test_console_only(self):
        assert setup_logging(Settings()) is None


class TestOrderedMap:
    """有界并发测试"""

    def test_results_keep_input_order(self):
        assert ordered_map(lambda x: x * x, range(20), workers=4) == [x * x for x in range(20)]

    def test_sequential_when_single_worker(self):
        assert ordered_map(str, [3, 1, 2]) == ["3", "1", "2"]
