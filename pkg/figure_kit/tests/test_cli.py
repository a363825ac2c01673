"""CLI behaviour: flag mode, job-file mode, error reporting."""

import subprocess
import sys

from figure_kit.cli import main


def _write_csv(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("sigma0,skew\n0.1,-0.003\n0.3,-0.009\n0.5,-0.014\n")
    return path


def test_single_figure_from_flags(tmp_path, capsys):
    csv = _write_csv(tmp_path)
    out = tmp_path / "skew.svg"
    rc = main(
        [
            "--kind", "line",
            "--input", str(csv),
            "--output", str(out),
            "--x", "sigma0",
            "--y", "skew",
        ]
    )
    assert rc == 0
    assert f"wrote {out}" in capsys.readouterr().out
    assert out.exists()


def test_job_file_renders_every_figure(tmp_path, capsys):
    csv = _write_csv(tmp_path)
    toml = tmp_path / "jobs.toml"
    toml.write_text(
        "[[figure]]\n"
        f'kind = "line"\ninput = "{csv}"\noutput = "{tmp_path / "a.svg"}"\n'
        'x = "sigma0"\ny = "skew"\n'
        "[[figure]]\n"
        f'kind = "fit_line"\ninput = "{csv}"\noutput = "{tmp_path / "b.svg"}"\n'
        'x = "sigma0"\ny = "skew"\n'
    )
    rc = main([str(toml)])
    out = capsys.readouterr().out
    assert rc == 0
    assert (tmp_path / "a.svg").exists()
    assert (tmp_path / "b.svg").exists()
    # the fit_line job printed its coefficients
    assert "intercept " in out and "slope " in out


def test_flags_require_kind_input_output(tmp_path, capsys):
    rc = main(["--kind", "line", "--x", "a", "--y", "b"])
    assert rc == 1
    assert "error: --input is required" in capsys.readouterr().err


def test_missing_job_file_reports_error(tmp_path, capsys):
    rc = main([str(tmp_path / "absent.toml")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_bad_column_reports_error_and_exits_nonzero(tmp_path, capsys):
    csv = _write_csv(tmp_path)
    rc = main(
        [
            "--kind", "line",
            "--input", str(csv),
            "--output", str(tmp_path / "o.svg"),
            "--x", "sigma0",
            "--y", "iv",
        ]
    )
    assert rc == 1
    err = capsys.readouterr().err
    assert "missing columns ['iv']" in err


def test_module_entry_point_runs_in_subprocess(tmp_path):
    csv = _write_csv(tmp_path)
    out = tmp_path / "m.svg"
    proc = subprocess.run(
        [
            sys.executable, "-m", "figure_kit.cli",
            "--kind", "line",
            "--input", str(csv),
            "--output", str(out),
            "--x", "sigma0",
            "--y", "skew",
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
