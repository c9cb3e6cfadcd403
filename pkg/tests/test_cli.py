import csv
import math
import subprocess
import sys

import numpy as np
import pytest

from scorefold.cli import main
from scorefold.geometry import mirror
from scorefold.io import parse_pdb_ca, read_csv, read_tensor, write_ca_pdb
from scorefold.sampler import init_structure, decoy_seeds
from scorefold.toy import helix, toy_set, write_dataset


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def kv(text):
    return dict(line.split("\t", 1) for line in text.strip().splitlines() if "\t" in line)


@pytest.fixture(scope="module")
def capsid_pdb(tmp_path_factory, capsid64):
    path = tmp_path_factory.mktemp("native") / "capsid64.pdb"
    write_ca_pdb(capsid64, path)
    return path


@pytest.fixture(scope="module")
def mini_manifest(tmp_path_factory):
    return write_dataset(tmp_path_factory.mktemp("mini"), toy_set((20, 22, 24)), ["train", "train", "valid"])


def test_version_from_console_script():
    proc = subprocess.run([sys.executable, "-m", "scorefold.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "scorefold" in proc.stdout


def test_schedule_defaults(capsys):
    code, out, _ = run(capsys, "schedule")
    rows = [line.split("\t") for line in out.strip().splitlines()[1:]]
    assert code == 0 and len(rows) == 32
    lam = np.array([float(r[2]) for r in rows])
    assert lam[0] == 10.0 and lam[-1] == pytest.approx(1e-5)
    sig = np.array([float(r[1]) for r in rows])
    assert np.allclose(sig[1:] / sig[:-1], sig[1] / sig[0], rtol=1e-5)


@pytest.mark.parametrize("argv", [["--levels", "1"], ["--sigma-min", "20"], ["--lambda0", "0"], ["--bogus"]])
def test_schedule_rejects_bad_input(capsys, argv):
    with pytest.raises(SystemExit) as info:
        code = main(["schedule"] + argv)
        raise SystemExit(code)
    assert info.value.code == 2


def test_schedule_config_echo(capsys, tmp_path):
    run(capsys, "schedule", "--config-echo", tmp_path / "echo.txt")
    text = (tmp_path / "echo.txt").read_text()
    assert "levels=32" in text and "lambda0=0.1" in text


def test_perturb(capsys, tmp_path, data_dir):
    chain = parse_pdb_ca(data_dir / "2XHE.pdb", "B").crop(0, 100)
    write_ca_pdb(chain, tmp_path / "in.pdb")
    code, out, _ = run(capsys, "perturb", "--pdb", tmp_path / "in.pdb", "--sigma", 2, "--seed", 3,
                       "--out", tmp_path / "a.pdb")
    assert code == 0
    assert float(kv(out)["rmsd_to_input"]) == pytest.approx(2 * math.sqrt(3), rel=0.1)
    run(capsys, "perturb", "--pdb", tmp_path / "in.pdb", "--sigma", 2, "--seed", 3, "--out", tmp_path / "b.pdb")
    assert (tmp_path / "a.pdb").read_bytes() == (tmp_path / "b.pdb").read_bytes()
    assert (tmp_path / "a.pdb.config.txt").exists()
    run(capsys, "perturb", "--pdb", tmp_path / "in.pdb", "--sigma", 1e-12, "--out", tmp_path / "c.pdb")
    assert np.abs(parse_pdb_ca(tmp_path / "c.pdb").coords - chain.coords).max() <= 0.0005 + 1e-9


def test_perturb_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "perturb", "--pdb", tmp_path / "none.pdb", "--sigma", 1, "--out", tmp_path / "o.pdb")
    assert code == 2 and "error" in err


def train_args(manifest, out, *extra):
    return ["train", "--manifest", manifest, "--epochs", 3, "--batch", 2, "--crop", 16, "--width", 8,
            "--blocks", 1, "--out-model", out, *extra]


def test_train_zero_lr_is_flat(capsys, tmp_path, mini_manifest):
    code, out, _ = run(capsys, *train_args(mini_manifest, tmp_path / "m.ckpt", "--lr", 0))
    assert code == 0
    rows = read_csv(tmp_path / "m.ckpt.loss.csv")
    assert [int(r["epoch"]) for r in rows] == [-1, 0, 1, 2]
    assert len({r["valid"] for r in rows[1:]}) == 1
    assert (tmp_path / "m.ckpt.config.txt").exists()


def test_train_is_byte_reproducible(capsys, tmp_path, mini_manifest):
    run(capsys, *train_args(mini_manifest, tmp_path / "a.ckpt", "--lr", 1e-3))
    run(capsys, *train_args(mini_manifest, tmp_path / "b.ckpt", "--lr", 1e-3))
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert (tmp_path / "a.ckpt.loss.csv").read_bytes() == (tmp_path / "b.ckpt.loss.csv").read_bytes()


def test_train_without_train_split(capsys, tmp_path):
    manifest = write_dataset(tmp_path, [helix(20)], ["test"])
    code, _, err = run(capsys, *train_args(manifest, tmp_path / "m.ckpt"))
    assert code == 2 and "train split" in err


def test_train_divergence_exit_code(capsys, tmp_path, mini_manifest):
    with np.errstate(all="ignore"):
        code, _, err = run(capsys, *train_args(mini_manifest, tmp_path / "m.ckpt", "--lr", 1e30))
    assert code == 3 and "diverged" in err


def test_oracle_sampling_recovers_native(capsys, tmp_path, capsid_pdb):
    code, out, _ = run(capsys, "sample", "--oracle-pdb", capsid_pdb, "--decoys", 16, "--out-dir", tmp_path / "s")
    assert code == 0
    assert float(kv(out)["max_rmsd_to_oracle"]) <= 0.5
    decoys = sorted((tmp_path / "s").glob("decoy_*.pdb"))
    assert len(decoys) == 16
    index = read_csv(tmp_path / "s" / "index.csv")
    assert len(index) == 16 * 33
    frames, meta = read_tensor(tmp_path / "s" / index[0]["file"])
    assert frames.shape == (33, 64, 3) and meta["iterations"] == "64"
    assert len(read_csv(tmp_path / "s" / "stats.csv")) == 32
    assert "decoys=16" in (tmp_path / "s" / "config.txt").read_text()


def test_zero_iterations_return_initialisation(capsys, tmp_path, capsid_pdb):
    code, _, _ = run(capsys, "sample", "--oracle-pdb", capsid_pdb, "--decoys", 2, "--stages-T", 0,
                     "--seed", 5, "--out-dir", tmp_path / "s")
    assert code == 0
    for n, seed in enumerate(decoy_seeds(5, 2)):
        X = parse_pdb_ca(tmp_path / "s" / f"decoy_{n:03d}.pdb").coords
        assert np.abs(X - init_structure(64, np.random.default_rng(seed))).max() <= 0.0005 + 1e-9


def test_sampling_is_bit_reproducible(capsys, tmp_path, capsid_pdb):
    for name in ("a", "b"):
        run(capsys, "sample", "--oracle-pdb", capsid_pdb, "--decoys", 2, "--stages-T", 4, "--seed", 9,
            "--out-dir", tmp_path / name)
    for rel in ("decoy_000.pdb", "decoy_001.pdb", "trajectory/decoy_001.sft"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_sample_length_mismatch(capsys, tmp_path, capsid_pdb):
    code, _, err = run(capsys, "sample", "--oracle-pdb", capsid_pdb, "--seq", "ACDEFGHIK", "--decoys", 1,
                       "--out-dir", tmp_path / "s")
    assert code == 2 and "residues" in err


def test_sample_with_checkpoint(capsys, tmp_path, mini_manifest):
    run(capsys, *train_args(mini_manifest, tmp_path / "m.ckpt", "--lr", 1e-3))
    code, out, _ = run(capsys, "sample", "--model", tmp_path / "m.ckpt", "--pdb", mini_manifest.parent / "toy00.pdb",
                       "--predictions", mini_manifest.parent / "toy00.sft", "--decoys", 1, "--stages-T", 2,
                       "--out-dir", tmp_path / "s")
    assert code == 0 and len(parse_pdb_ca(tmp_path / "s" / "decoy_000.pdb")) == 20
    code, _, _ = run(capsys, "sample", "--model", tmp_path / "m.ckpt", "--seq", "A" * 20,
                     "--predictions", mini_manifest.parent / "toy01.sft", "--decoys", 1, "--out-dir", tmp_path / "t")
    assert code == 2


def test_hirm_reference(capsys, tmp_path):
    manifest = write_dataset(tmp_path, [helix(30), helix(40)])
    code, out, _ = run(capsys, "hirm-ref", "--manifest", manifest, "--out", tmp_path / "ref.sft")
    assert code == 0 and 40 <= float(kv(out)["mode_deg"]) <= 60
    freqs, meta = read_tensor(tmp_path / "ref.sft")
    assert freqs.sum() == pytest.approx(1.0, abs=1e-9) and int(meta["bins"]) == 36
    run(capsys, "hirm-ref", "--manifest", manifest, "--out", tmp_path / "ref2.sft")
    assert (tmp_path / "ref.sft").read_bytes() == (tmp_path / "ref2.sft").read_bytes()
    code, _, _ = run(capsys, "hirm-ref", "--manifest", manifest, "--split", "test", "--out", tmp_path / "x.sft")
    assert code == 2


def test_sample_with_hirm_reference(capsys, tmp_path, capsid_pdb):
    manifest = write_dataset(tmp_path, [helix(40)])
    run(capsys, "hirm-ref", "--manifest", manifest, "--out", tmp_path / "ref.sft")
    code, _, _ = run(capsys, "sample", "--oracle-pdb", capsid_pdb, "--decoys", 1, "--stages-T", 4,
                     "--hirm-ref", tmp_path / "ref.sft", "--out-dir", tmp_path / "s")
    assert code == 0
    assert "hirm_ref=" in (tmp_path / "s" / "config.txt").read_text()


def test_eval_self_and_mirror(capsys, tmp_path, capsid64, capsid_pdb):
    d = tmp_path / "decoys"
    d.mkdir()
    write_ca_pdb(capsid64, d / "self.pdb")
    write_ca_pdb(capsid64.with_coords(mirror(capsid64.coords)), d / "mirror.pdb")
    code, out, _ = run(capsys, "eval", "--pred-dir", d, "--native", capsid_pdb, "--out", tmp_path / "m.csv")
    assert code == 0
    rows = {r["decoy"]: r for r in read_csv(tmp_path / "m.csv")}
    assert float(rows["self"]["lddt"]) == 1.0 and float(rows["self"]["gdt"]) == 1.0
    assert float(rows["self"]["rmsd"]) < 1e-3
    assert float(rows["mirror"]["lddt"]) == 1.0 and float(rows["mirror"]["gdt"]) < 1.0
    summary = read_csv(tmp_path / "m_summary.csv")[0]
    assert float(summary["lDDT-Ca-Avg"]) == 1.0
    mean_gdt = (float(rows["self"]["gdt"]) + float(rows["mirror"]["gdt"])) / 2
    assert float(summary["GDT-TS-Avg"]) == pytest.approx(mean_gdt, rel=1e-5)
    assert float(rows["mean"]["gdt"]) == pytest.approx(mean_gdt, rel=1e-5)
    assert float(summary["GDT-TS-Max"]) == 1.0


def test_eval_errors(capsys, tmp_path, capsid_pdb):
    (tmp_path / "empty").mkdir()
    assert run(capsys, "eval", "--pred-dir", tmp_path / "empty", "--native", capsid_pdb,
               "--out", tmp_path / "m.csv")[0] == 2
    assert run(capsys, "eval", "--pred-dir", tmp_path / "empty", "--native", capsid_pdb, "--metrics", "tm",
               "--out", tmp_path / "m.csv")[0] == 2


def test_report_on_oracle_run(capsys, tmp_path, capsid_pdb):
    run(capsys, "sample", "--oracle-pdb", capsid_pdb, "--decoys", 16, "--seed", 2, "--out-dir", tmp_path / "s")
    code, _, _ = run(capsys, "report", "--trajectory-dir", tmp_path / "s", "--native", capsid_pdb,
                     "--out", tmp_path / "r.csv")
    assert code == 0
    rows = read_csv(tmp_path / "r.csv")
    assert [int(r["stage"]) for r in rows] == list(range(33))
    lddt = [float(r["lddt"]) for r in rows]
    assert all(b >= a for a, b in zip(lddt[1:22], lddt[2:23]))
    assert lddt[-1] >= 0.95
    timing = read_csv(tmp_path / "r_timing.csv")
    assert len(timing) == 16 and all(int(t["iterations"]) == 32 * 64 for t in timing)


def test_report_errors(capsys, tmp_path, capsid_pdb):
    (tmp_path / "empty").mkdir()
    assert run(capsys, "report", "--trajectory-dir", tmp_path / "empty", "--native", capsid_pdb,
               "--out", tmp_path / "r.csv")[0] == 2
    with open(tmp_path / "empty" / "index.csv", "w", newline="") as fh:
        csv.writer(fh).writerows([["decoy", "stage", "iteration", "file", "seconds"],
                                  [0, 1, 64, "trajectory/missing.sft", 0.1]])
    assert run(capsys, "report", "--trajectory-dir", tmp_path / "empty", "--native", capsid_pdb,
               "--out", tmp_path / "r.csv")[0] == 2
