"""结果输出测试"""

from utils.reporting import SUMMARY_FILE, format_cell, update_summary, write_csv


class TestReporting:
    """CSV 与 summary.txt 测试"""

    def test_format_cell(self):
        assert format_cell(0.1) == "0.1"
        assert format_cell(1 / 3) == repr(1 / 3)
        assert format_cell(float("nan")) == "nan"
        assert format_cell(True) == "true"
        assert format_cell(None) == ""
        assert format_cell(7) == "7"

    def test_write_csv_uses_newline_endings(self, tmp_path):
        path = write_csv(tmp_path / "sub" / "rows.csv", ["a", "b"], [[1, 0.5], ["x,y", False]])
        assert path.read_bytes() == b'a,b\n1,0.5\n"x,y",false\n'

    def test_summary_sections_replaced_in_order(self, tmp_path):
        update_summary(tmp_path, "train", ["epochs = 2"])
        update_summary(tmp_path, "synth", ["|P| = 60"])
        update_summary(tmp_path, "train", ["epochs = 3"])
        text = (tmp_path / SUMMARY_FILE).read_text(encoding="utf-8")
        assert text == "[synth]\n|P| = 60\n\n[train]\nepochs = 3\n"
