import pytest

from rbsim import pdf_report
from rbsim.cli import main
from rbsim.pdf_report import generate_run_pdf
from rbsim.result_store import RunRecord


def _record(**overrides):
    data = dict(
        timestamp="2024-01-01T00:00:00+00:00",
        experiment="curve",
        config_digest="ab" * 32,
        success=True,
        files=["out/curve.csv", "out/curve.json"],
        summary={"method": "markov_exact", "p0_last": 0.93},
        warnings=["no approximation is inside its validity regime"],
    )
    data.update(overrides)
    return RunRecord(**data)


def test_pdf_is_written(tmp_path):
    pytest.importorskip("reportlab")
    path = tmp_path / "nested" / "run.pdf"
    assert generate_run_pdf(_record(), path) is None
    assert path.read_bytes().startswith(b"%PDF")


def test_failed_run_pdf(tmp_path):
    pytest.importorskip("reportlab")
    path = tmp_path / "failed.pdf"
    assert generate_run_pdf(_record(success=False, files=[], error_message="boom"), path) is None
    assert path.exists()


def test_missing_reportlab_is_reported(tmp_path, monkeypatch):
    monkeypatch.setattr(pdf_report, "_get_reportlab", lambda: None)
    err = generate_run_pdf(_record(), tmp_path / "run.pdf")
    assert "ReportLab" in err
    assert not (tmp_path / "run.pdf").exists()


def test_cli_pdf_flag(tmp_path):
    pytest.importorskip("reportlab")
    out = tmp_path / "out"
    main(["fcoef", "--out", str(out), "--pdf", "-q"])
    assert len(list(out.glob("fcoef-*.pdf"))) == 1
