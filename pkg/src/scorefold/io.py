"""File formats: Calpha PDB traces, the SFT1 tensor container, CSV reports and
dataset manifests."""

from __future__ import annotations

import csv
import json
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, InvalidInputError
from .geometry import Structure

log = logging.getLogger(__name__)

THREE_TO_ONE = {
    "ALA": "A", "CYS": "C", "ASP": "D", "GLU": "E", "PHE": "F", "GLY": "G",
    "HIS": "H", "ILE": "I", "LYS": "K", "LEU": "L", "MET": "M", "ASN": "N",
    "PRO": "P", "GLN": "Q", "ARG": "R", "SER": "S", "THR": "T", "VAL": "V",
    "TRP": "W", "TYR": "Y", "MSE": "M",
}
ONE_TO_THREE = {v: k for k, v in THREE_TO_ONE.items() if k != "MSE"}

# ---------------------------------------------------------------- PDB


def parse_pdb_ca(path, chain=None) -> Structure:
    """Read one Calpha per residue of ``chain`` (first chain when None).

    Only the first model is read. Alternate locations are resolved by highest
    occupancy, ties going to the first record seen. Selenomethionine HETATM
    records count as methionine.
    """
    residues = {}
    seen_residues = set()
    chosen_chain = chain
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            rec = line[:6]
            if rec.startswith("ENDMDL"):
                break
            is_atom = rec == "ATOM  "
            is_mse = rec == "HETATM" and line[17:20] == "MSE"
            if not (is_atom or is_mse):
                continue
            if len(line.rstrip("\n")) < 54:
                raise FormatError(f"{path}: truncated ATOM record", f"line {lineno}")
            ch = line[21]
            if chosen_chain is None:
                chosen_chain = ch
            if ch != chosen_chain:
                continue
            try:
                resseq = int(line[22:26])
            except ValueError:
                raise FormatError(f"{path}: bad residue number {line[22:26]!r}", f"line {lineno}")
            key = (resseq, line[26])
            seen_residues.add(key)
            if line[12:16].strip() != "CA":
                continue
            try:
                xyz = [float(line[30:38]), float(line[38:46]), float(line[46:54])]
            except ValueError:
                raise FormatError(f"{path}: bad coordinate field", f"line {lineno}")
            occ_field = line[54:60].strip()
            try:
                occ = float(occ_field) if occ_field else 1.0
            except ValueError:
                raise FormatError(f"{path}: bad occupancy {occ_field!r}", f"line {lineno}")
            if not all(math.isfinite(v) for v in xyz):
                raise FormatError(f"{path}: non-finite coordinate", f"line {lineno}")
            aa = THREE_TO_ONE.get(line[17:20].strip(), "X")
            prev = residues.get(key)
            if prev is None or occ > prev[0]:
                residues[key] = (occ, aa, xyz)
    if not residues:
        raise DataError(f"{path}: no CA atoms for chain {chosen_chain!r}")
    missing = len(seen_residues) - len(residues)
    if missing:
        log.warning("%s: skipped %d residues without a CA atom", path, missing)
    keys = sorted(residues)
    seq = "".join(residues[k][1] for k in keys)
    coords = np.array([residues[k][2] for k in keys])
    return Structure(seq, coords)


def write_ca_pdb(structure, path, chain="A"):
    """Write a Calpha-only PDB.

    ``structure`` is a Structure or a ``(sequence, coords)`` pair; the pair form
    allows traces shorter than a full Structure.
    """
    if isinstance(structure, Structure):
        seq, coords = structure.sequence, structure.coords
    else:
        seq, coords = structure
        coords = np.asarray(coords, dtype=np.float64).reshape(-1, 3)
    if len(seq) != len(coords):
        raise InvalidInputError("sequence and coordinates differ in length")
    lines = []
    for i, (aa, xyz) in enumerate(zip(seq, coords), start=1):
        fields = [f"{v:8.3f}" for v in xyz]
        if any(len(f) > 8 for f in fields) or not np.isfinite(xyz).all():
            raise InvalidInputError(f"residue {i}: coordinate {xyz} overflows PDB columns")
        name = ONE_TO_THREE.get(aa, "UNK")
        lines.append(
            f"ATOM  {i:5d}  CA  {name:>3s} {chain}{i:4d}    "
            f"{''.join(fields)}{1.0:6.2f}{0.0:6.2f}           C  "
        )
    n = len(seq)
    last = ONE_TO_THREE.get(seq[-1], "UNK") if n else "UNK"
    lines.append(f"TER   {n + 1:5d}      {last:>3s} {chain}{n:4d}")
    lines.append("END")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- tensors

MAGIC = b"SFT1"
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}


def encode_tensor(array, metadata=None) -> bytes:
    """Serialize to the SFT1 layout.

    magic | dtype u8 | rank u8 | dims u32le * rank | payload | meta_len u32le | meta
    """
    arr = np.asarray(array)
    dt = arr.dtype.newbyteorder("<")
    if dt not in DTYPE_CODES:
        raise InvalidInputError(f"unsupported dtype {arr.dtype}; use float32 or float64")
    if arr.ndim > 255:
        raise InvalidInputError("rank exceeds 255")
    if any(d >= 2 ** 32 for d in arr.shape):
        raise InvalidInputError("dimension exceeds uint32")
    meta_lines = []
    for key, value in (metadata or {}).items():
        key, value = str(key), str(value)
        if "=" in key or "\n" in key or "\n" in value or not key:
            raise InvalidInputError(f"metadata entry {key!r} cannot be encoded")
        meta_lines.append(f"{key}={value}\n")
    meta = "".join(meta_lines).encode("utf-8")
    header = MAGIC + struct.pack("<BB", DTYPE_CODES[dt], arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype=dt).tobytes(order="C")
    return header + payload + struct.pack("<I", len(meta)) + meta


def decode_tensor(blob: bytes):
    """Inverse of :func:`encode_tensor`; returns ``(array, metadata)``."""
    if len(blob) < 6:
        raise FormatError("tensor file truncated in header", 0)
    if blob[:4] != MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}", 0)
    code, rank = blob[4], blob[5]
    if code not in DTYPES:
        raise FormatError(f"unknown dtype code {code}", 4)
    dtype = DTYPES[code]
    off = 6
    if len(blob) < off + 4 * rank:
        raise FormatError("tensor file truncated in dims", off)
    dims = struct.unpack_from(f"<{rank}I", blob, off)
    off += 4 * rank
    count = math.prod(dims)
    nbytes = count * dtype.itemsize
    if nbytes > len(blob) - off:
        raise FormatError(f"payload of {nbytes} bytes exceeds file size", off)
    arr = np.frombuffer(blob, dtype=dtype, count=count, offset=off).reshape(dims).copy()
    off += nbytes
    if len(blob) < off + 4:
        raise FormatError("tensor file truncated before metadata", off)
    (mlen,) = struct.unpack_from("<I", blob, off)
    off += 4
    if len(blob) != off + mlen:
        raise FormatError(f"metadata length {mlen} disagrees with file size", off)
    try:
        text = blob[off:].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"metadata is not UTF-8: {exc}", off)
    metadata = {}
    # split on "\n" only: values may contain other Unicode line separators
    lines = text.split("\n")
    if lines[-1] != "":
        raise FormatError("metadata does not end with a newline", off)
    for line in lines[:-1]:
        if "=" not in line:
            raise FormatError(f"metadata line {line!r} lacks '='", off)
        k, v = line.split("=", 1)
        metadata[k] = v
    return arr, metadata


def write_tensor(path, array, metadata=None):
    Path(path).write_bytes(encode_tensor(array, metadata))


def read_tensor(path):
    return decode_tensor(Path(path).read_bytes())


# ---------------------------------------------------------------- CSV


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6g}"
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return value


def emit_csv(records, path, fieldnames=None):
    """Write dict records with a header row; floats at 6 significant digits."""
    records = list(records)
    if fieldnames is None:
        if not records:
            raise InvalidInputError("fieldnames are required for an empty record list")
        fieldnames = list(records[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, quoting=csv.QUOTE_MINIMAL)
        writer.writeheader()
        for rec in records:
            writer.writerow({k: _fmt(rec.get(k, "")) for k in fieldnames})


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- manifests

SPLITS = ("train", "valid", "test")


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    pdb: Path
    chain: str | None = None
    predictions: Path | None = None
    split: str = "train"


def load_manifest(path) -> list[ManifestEntry]:
    """Load a JSON manifest: ``{"entries": [{"id", "pdb", "chain", "predictions", "split"}]}``.

    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc.msg}", f"line {exc.lineno}")
    raw = doc.get("entries") if isinstance(doc, dict) else None
    if not isinstance(raw, list):
        raise FormatError(f"{path}: expected an object with an 'entries' list")
    base = path.parent
    entries, ids = [], set()
    for n, item in enumerate(raw):
        try:
            eid = str(item["id"])
            pdb = base / item["pdb"]
        except (KeyError, TypeError):
            raise FormatError(f"{path}: entry {n} needs 'id' and 'pdb'", f"entry {n}")
        if eid in ids:
            raise DataError(f"{path}: duplicate id {eid!r}")
        ids.add(eid)
        split = item.get("split", "train")
        if split not in SPLITS:
            raise DataError(f"{path}: entry {eid!r} has unknown split {split!r}")
        pred = item.get("predictions")
        pred = base / pred if pred else None
        for f in (pdb, pred):
            if f is not None and not f.exists():
                raise DataError(f"{path}: entry {eid!r} references missing file {f}")
        entries.append(ManifestEntry(eid, pdb, item.get("chain"), pred, split))
    return entries


def write_manifest(entries, path):
    path = Path(path)
    out = []
    for e in entries:
        item = {"id": e.id, "pdb": str(e.pdb), "split": e.split}
        if e.chain:
            item["chain"] = e.chain
        if e.predictions:
            item["predictions"] = str(e.predictions)
        out.append(item)
    path.write_text(json.dumps({"entries": out}, indent=2) + "\n")
