"""End-to-end runs of every subcommand plus exit-code contracts."""

import json

import numpy as np
import pytest

from lmh import cli
from lmh import io as lmhio
from lmh.fem import assemble_mass, mass_diagonal
from lmh.mesh import read_mesh
from lmh.solvers import NumericalError
from lmh.synth import grid_mesh, icosphere
from lmh.mesh import write_off


@pytest.fixture(scope="module")
def mesh_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("meshes") / "square.off"
    write_off(grid_mesh(10, 10), path)
    return path


@pytest.fixture(scope="module")
def sphere_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("meshes") / "sphere.off"
    write_off(icosphere(2, radius=5.0), path)
    return path


def run_json(capsys, argv):
    """Run the CLI and parse the single-line JSON summary."""
    code = cli.run(argv)
    out = capsys.readouterr().out.strip().splitlines()
    return code, json.loads(out[-1])


def make_region(capsys, mesh_file, out_dir, box=("0.0", "0.5", "0.0", "0.5")):
    code, summary = run_json(capsys, [
        "region", "--mesh", str(mesh_file),
        "--box", *box, "--out-dir", str(out_dir),
    ])
    assert code == 0
    return summary["region_file"]


class TestMh:
    def test_computes_and_saves_basis(self, capsys, mesh_file, tmp_path):
        code, summary = run_json(capsys, [
            "mh", "--mesh", str(mesh_file), "--k", "6",
            "--out-dir", str(tmp_path),
        ])
        assert code == 0
        assert summary["k"] == 6 and summary["n_vertices"] == 121
        basis = lmhio.load_basis(summary["basis_file"],
                                 summary["spectrum_file"])
        assert basis.functions.shape == (121, 6)
        mesh = read_mesh(mesh_file)
        a = mass_diagonal(assemble_mass(mesh))
        gram = basis.functions.T @ (a[:, None] * basis.functions)
        assert np.abs(gram - np.eye(6)).max() <= 1e-8
        assert np.all(np.diff(basis.spectrum) >= -1e-12)
        assert summary["lambda_first"] == basis.spectrum[0]
        assert summary["lambda_last"] == basis.spectrum[-1]

    def test_reruns_are_byte_identical(self, capsys, mesh_file, tmp_path):
        args = ["mh", "--mesh", str(mesh_file), "--k", "5", "--seed", "4"]
        d1, d2 = tmp_path / "a", tmp_path / "b"
        assert cli.run(args + ["--out-dir", str(d1)]) == 0
        assert cli.run(args + ["--out-dir", str(d2)]) == 0
        capsys.readouterr()
        assert (d1 / "mh_basis.txt").read_bytes() == (
            d2 / "mh_basis.txt"
        ).read_bytes()
        assert (d1 / "mh_spectrum.txt").read_bytes() == (
            d2 / "mh_spectrum.txt"
        ).read_bytes()

    def test_prefix_and_nested_out_dir(self, capsys, mesh_file, tmp_path):
        out = tmp_path / "deep" / "er"
        code, summary = run_json(capsys, [
            "mh", "--mesh", str(mesh_file), "--k", "3",
            "--out-dir", str(out), "--prefix", "run7_",
        ])
        assert code == 0
        assert (out / "run7_mh_basis.txt").exists()


class TestRegionCommand:
    def test_box_region_is_binary(self, capsys, mesh_file, tmp_path):
        code, summary = run_json(capsys, [
            "region", "--mesh", str(mesh_file),
            "--box", "0.0", "0.5", "0.0", "0.5", "--out-dir", str(tmp_path),
        ])
        assert code == 0 and summary["binary"]
        region = lmhio.load_region(summary["region_file"])
        assert region.is_binary and len(region) == 121
        assert region.inside.size == summary["u_sum"] == 36

    def test_soft_region_from_seeds(self, capsys, mesh_file, tmp_path):
        code, summary = run_json(capsys, [
            "region", "--mesh", str(mesh_file),
            "--seeds", "60", "--variance", "0.05",
            "--out-dir", str(tmp_path),
        ])
        assert code == 0 and not summary["binary"]
        assert summary["u_max"] == 1.0
        region = lmhio.load_region(summary["region_file"])
        assert region.u[60] == 1.0

    def test_threshold_binarizes(self, capsys, mesh_file, tmp_path):
        code, summary = run_json(capsys, [
            "region", "--mesh", str(mesh_file),
            "--seeds", "60", "--variance", "0.05", "--threshold", "0.5",
            "--out-dir", str(tmp_path),
        ])
        assert code == 0 and summary["binary"]

    def test_conflicting_and_missing_selectors(self, capsys, mesh_file,
                                               tmp_path):
        base = ["region", "--mesh", str(mesh_file), "--out-dir",
                str(tmp_path)]
        assert cli.run(base + ["--seeds", "0", "--box", "0", "1", "0", "1"]) == 1
        assert cli.run(base) == 1
        assert cli.run(base + ["--seeds", "400"]) == 1
        assert cli.run(base + ["--box", "9", "10", "9", "10"]) == 1
        capsys.readouterr()


class TestLmh:
    def test_localized_basis_summary(self, capsys, mesh_file, tmp_path):
        region_file = make_region(capsys, mesh_file, tmp_path)
        code, summary = run_json(capsys, [
            "lmh", "--mesh", str(mesh_file), "--region", region_file,
            "--k", "5", "--kprime", "8", "--out-dir", str(tmp_path),
        ])
        assert code == 0
        assert summary["kprime"] == 8
        assert summary["orthonormality_defect"] <= 1e-8
        assert summary["phi_overlap_max"] <= 1e-3
        assert summary["mu_perp"] >= 1e5
        basis = lmhio.load_basis(summary["basis_file"])
        assert basis.functions.shape == (121, 5)

    def test_phi_reuse(self, capsys, mesh_file, tmp_path):
        code, mh_summary = run_json(capsys, [
            "mh", "--mesh", str(mesh_file), "--k", "8",
            "--out-dir", str(tmp_path),
        ])
        assert code == 0
        region_file = make_region(capsys, mesh_file, tmp_path)
        code, summary = run_json(capsys, [
            "lmh", "--mesh", str(mesh_file), "--region", region_file,
            "--k", "4", "--phi", mh_summary["basis_file"],
            "--out-dir", str(tmp_path), "--prefix", "reuse_",
        ])
        assert code == 0
        assert summary["kprime"] == 8  # defaults to the file size
        code = cli.run([
            "lmh", "--mesh", str(mesh_file), "--region", region_file,
            "--k", "4", "--phi", mh_summary["basis_file"], "--kprime", "9",
            "--out-dir", str(tmp_path),
        ])
        capsys.readouterr()
        assert code == 1  # more than the file provides

    def test_region_length_mismatch(self, capsys, mesh_file, sphere_file,
                                    tmp_path):
        region_file = make_region(capsys, mesh_file, tmp_path)
        code = cli.run([
            "lmh", "--mesh", str(sphere_file), "--region", region_file,
            "--k", "4", "--out-dir", str(tmp_path),
        ])
        capsys.readouterr()
        assert code == 1

    def test_reruns_are_byte_identical(self, capsys, mesh_file, tmp_path):
        region_file = make_region(capsys, mesh_file, tmp_path)
        args = ["lmh", "--mesh", str(mesh_file), "--region", region_file,
                "--k", "4", "--kprime", "6", "--seed", "2"]
        d1, d2 = tmp_path / "a", tmp_path / "b"
        assert cli.run(args + ["--out-dir", str(d1)]) == 0
        assert cli.run(args + ["--out-dir", str(d2)]) == 0
        capsys.readouterr()
        assert (d1 / "lmh_basis.txt").read_bytes() == (
            d2 / "lmh_basis.txt"
        ).read_bytes()


class TestPmh:
    def test_submesh_basis(self, capsys, mesh_file, tmp_path):
        region_file = make_region(capsys, mesh_file, tmp_path)
        code, summary = run_json(capsys, [
            "pmh", "--mesh", str(mesh_file), "--region", region_file,
            "--k", "5", "--out-dir", str(tmp_path),
        ])
        assert code == 0
        assert summary["submesh_vertices"] == 36
        basis = lmhio.load_basis(summary["basis_file"])
        assert basis.functions.shape == (121, 5)

    def test_soft_region_rejected(self, capsys, mesh_file, tmp_path):
        code, summary = run_json(capsys, [
            "region", "--mesh", str(mesh_file), "--seeds", "60",
            "--variance", "0.05", "--out-dir", str(tmp_path),
        ])
        assert code == 0
        code = cli.run([
            "pmh", "--mesh", str(mesh_file),
            "--region", summary["region_file"],
            "--k", "3", "--out-dir", str(tmp_path),
        ])
        capsys.readouterr()
        assert code == 1


class TestVerificationCommands:
    def test_gap_control_passes(self, capsys, mesh_file):
        code, summary = run_json(capsys, [
            "gap", "--mesh", str(mesh_file), "--kprime", "6",
        ])
        assert code == 0 and summary["passed"]
        assert abs(summary["lam1_Q"] - summary["lam_next_W"]) <= 1e-6 * abs(
            summary["lam_next_W"]
        )

    def test_gap_with_region_passes(self, capsys, mesh_file, tmp_path):
        region_file = make_region(capsys, mesh_file, tmp_path)
        code, summary = run_json(capsys, [
            "gap", "--mesh", str(mesh_file), "--region", region_file,
            "--kprime", "5",
        ])
        assert code == 0 and summary["passed"]

    def test_gap_failure_exits_2(self, capsys, mesh_file, recwarn):
        # mu_perp far below lambda_{k'+1} destroys the gap; the report
        # must say so and the process must signal it
        code, summary = run_json(capsys, [
            "gap", "--mesh", str(mesh_file), "--kprime", "5",
            "--mu-perp", "1.0",
        ])
        assert code == 2 and not summary["passed"]

    def test_bound_passes(self, capsys, mesh_file, tmp_path, recwarn):
        region_file = make_region(capsys, mesh_file, tmp_path,
                                  box=("0.0", "0.5", "0.0", "1.0"))
        code, summary = run_json(capsys, [
            "bound", "--mesh", str(mesh_file), "--region", region_file,
            "--kprime", "3", "--k", "6",
        ])
        assert code == 0 and summary["passed"]
        assert summary["min_margin"] >= 0.0
        assert len(summary["lmh_spectrum"]) == 6
        assert len(summary["submesh_spectrum"]) == 9

    def test_bound_rejects_soft_region(self, capsys, mesh_file, tmp_path):
        code, summary = run_json(capsys, [
            "region", "--mesh", str(mesh_file), "--seeds", "60",
            "--out-dir", str(tmp_path),
        ])
        assert code == 0
        code = cli.run([
            "bound", "--mesh", str(mesh_file),
            "--region", summary["region_file"], "--kprime", "2", "--k", "3",
        ])
        capsys.readouterr()
        assert code == 1

    def test_weyl_fit(self, capsys, mesh_file, tmp_path, recwarn):
        region_file = make_region(capsys, mesh_file, tmp_path,
                                  box=("0.0", "0.6", "0.0", "0.6"))
        code, summary = run_json(capsys, [
            "weyl", "--mesh", str(mesh_file), "--region", region_file,
            "--k", "20", "--kprime", "10",
        ])
        assert code == 0
        assert summary["slope"] > 0.0
        assert 0.0 <= summary["r_squared"] <= 1.0
        assert summary["normalized_slope"] == pytest.approx(
            summary["slope"] * np.sqrt(summary["region_area"])
        )


class TestReconstruct:
    def test_round_trip_outputs(self, capsys, mesh_file, tmp_path):
        code, mh_summary = run_json(capsys, [
            "mh", "--mesh", str(mesh_file), "--k", "12",
            "--out-dir", str(tmp_path),
        ])
        assert code == 0
        code, summary = run_json(capsys, [
            "reconstruct", "--mesh", str(mesh_file),
            "--basis", mh_summary["basis_file"], "--out-dir", str(tmp_path),
        ])
        assert code == 0
        rec = read_mesh(summary["mesh_file"])
        assert rec.n_vertices == 121
        errs = lmhio.load_scalar_field(summary["error_file"])
        assert errs.shape == (121,)
        assert summary["mean_error"] == pytest.approx(errs.mean())
        assert summary["max_error"] >= summary["mean_error"]

    def test_basis_mesh_mismatch(self, capsys, mesh_file, sphere_file,
                                 tmp_path):
        code, mh_summary = run_json(capsys, [
            "mh", "--mesh", str(mesh_file), "--k", "4",
            "--out-dir", str(tmp_path),
        ])
        assert code == 0
        code = cli.run([
            "reconstruct", "--mesh", str(sphere_file),
            "--basis", mh_summary["basis_file"], "--out-dir", str(tmp_path),
        ])
        capsys.readouterr()
        assert code == 1


class TestCorrespondenceChain:
    def test_identity_chain(self, capsys, mesh_file, tmp_path):
        code, mh_summary = run_json(capsys, [
            "mh", "--mesh", str(mesh_file), "--k", "8",
            "--out-dir", str(tmp_path),
        ])
        assert code == 0
        basis_file = mh_summary["basis_file"]
        p2p_file = tmp_path / "truth_p2p.txt"
        lmhio.save_p2p(np.arange(121), p2p_file)

        code, fmap_summary = run_json(capsys, [
            "fmap", "--basis-x", basis_file, "--basis-y", basis_file,
            "--mesh-y", str(mesh_file), "--p2p", str(p2p_file),
            "--out-dir", str(tmp_path),
        ])
        assert code == 0
        C = lmhio.load_cmatrix(fmap_summary["cmatrix_file"])
        assert np.abs(C - np.eye(8)).max() <= 1e-10

        code, p2p_summary = run_json(capsys, [
            "p2p", "--cmatrix", fmap_summary["cmatrix_file"],
            "--basis-x", basis_file, "--basis-y", basis_file,
            "--out-dir", str(tmp_path),
        ])
        assert code == 0

        code, curve_summary = run_json(capsys, [
            "error-curve", "--mesh", str(mesh_file),
            "--p2p", p2p_summary["p2p_file"], "--truth", str(p2p_file),
            "--out-dir", str(tmp_path),
        ])
        assert code == 0
        assert curve_summary["mean_error"] == 0.0
        assert curve_summary["exact_fraction"] == 1.0
        thresholds, fractions = lmhio.load_curve(curve_summary["curve_file"])
        assert thresholds.shape == (100,)
        np.testing.assert_array_equal(fractions, 1.0)

    def test_fmap_offblock_report(self, capsys, mesh_file, tmp_path):
        code, mh_summary = run_json(capsys, [
            "mh", "--mesh", str(mesh_file), "--k", "8",
            "--out-dir", str(tmp_path),
        ])
        assert code == 0
        p2p_file = tmp_path / "p2p.txt"
        lmhio.save_p2p(np.arange(121), p2p_file)
        code, summary = run_json(capsys, [
            "fmap", "--basis-x", mh_summary["basis_file"],
            "--basis-y", mh_summary["basis_file"],
            "--mesh-y", str(mesh_file), "--p2p", str(p2p_file),
            "--kprime", "5", "--k", "3", "--out-dir", str(tmp_path),
        ])
        assert code == 0
        assert summary["offblock_energy"] <= 1e-12

    def test_p2p_shape_mismatch(self, capsys, mesh_file, tmp_path):
        code, mh_summary = run_json(capsys, [
            "mh", "--mesh", str(mesh_file), "--k", "6",
            "--out-dir", str(tmp_path),
        ])
        assert code == 0
        C_file = tmp_path / "c.txt"
        lmhio.save_cmatrix(np.eye(5), C_file)
        code = cli.run([
            "p2p", "--cmatrix", str(C_file),
            "--basis-x", mh_summary["basis_file"],
            "--basis-y", mh_summary["basis_file"],
            "--out-dir", str(tmp_path),
        ])
        capsys.readouterr()
        assert code == 1


class TestBench:
    def test_times_both_paths(self, capsys, mesh_file, tmp_path):
        code = cli.run([
            "bench", "--mesh", str(mesh_file), "--k", "5", "--kprime", "3",
            "--paths", "relaxed,hard", "--out-dir", str(tmp_path),
        ])
        out = capsys.readouterr().out.strip().splitlines()
        assert code == 0
        assert out[0] == "mesh,n_vertices,k,kprime,path,status,seconds"
        rows = [line.split(",") for line in out[1:]]
        assert [r[4] for r in rows] == ["relaxed", "hard"]
        assert all(r[5] == "ok" for r in rows)
        assert all(float(r[6]) >= 0.0 for r in rows)
        assert (tmp_path / "bench.csv").read_text().strip() == "\n".join(
            out
        ).strip()

    def test_oversized_request_is_refused(self, capsys, mesh_file, tmp_path):
        code = cli.run([
            "bench", "--mesh", str(mesh_file), "--k", "119", "--kprime", "20",
            "--paths", "relaxed", "--out-dir", str(tmp_path),
        ])
        captured = capsys.readouterr()
        assert code == 0
        row = captured.out.strip().splitlines()[-1].split(",")
        assert row[5] == "refused" and row[6] == ""

    def test_unknown_path_rejected(self, capsys, mesh_file, tmp_path):
        code = cli.run([
            "bench", "--mesh", str(mesh_file), "--paths", "turbo",
            "--out-dir", str(tmp_path),
        ])
        capsys.readouterr()
        assert code == 1


class TestExitCodes:
    def test_unknown_flag(self, capsys, mesh_file):
        assert cli.run(["mh", "--mesh", str(mesh_file), "--k", "3",
                        "--frobnicate"]) == 1
        capsys.readouterr()

    def test_unknown_subcommand(self, capsys):
        assert cli.run(["transmogrify"]) == 1
        capsys.readouterr()

    def test_missing_required_flag(self, capsys):
        assert cli.run(["mh", "--k", "3"]) == 1
        capsys.readouterr()

    def test_missing_mesh_file(self, capsys, tmp_path):
        assert cli.run(["mh", "--mesh", str(tmp_path / "nope.off"),
                        "--k", "3"]) == 1
        capsys.readouterr()

    def test_bad_numeric_arguments(self, capsys, mesh_file):
        assert cli.run(["mh", "--mesh", str(mesh_file), "--k", "0"]) == 1
        assert cli.run(["mh", "--mesh", str(mesh_file), "--k", "three"]) == 1
        assert cli.run(["mh", "--mesh", str(mesh_file), "--k", "3",
                        "--seed", "-1"]) == 1
        capsys.readouterr()

    def test_k_too_large_for_mesh(self, capsys, mesh_file, tmp_path):
        assert cli.run(["mh", "--mesh", str(mesh_file), "--k", "200",
                        "--out-dir", str(tmp_path)]) == 1
        capsys.readouterr()

    def test_help_exits_0(self, capsys):
        assert cli.run(["--help"]) == 0
        assert cli.run(["lmh", "--help"]) == 0
        capsys.readouterr()

    def test_numerical_failure_exits_2(self, capsys, mesh_file, tmp_path,
                                       monkeypatch):
        def boom(*args, **kwargs):
            raise NumericalError("did not converge")

        monkeypatch.setattr(cli, "compute_mh", boom)
        code = cli.run(["mh", "--mesh", str(mesh_file), "--k", "3",
                        "--out-dir", str(tmp_path)])
        err = capsys.readouterr().err
        assert code == 2
        assert "numerical failure" in err
