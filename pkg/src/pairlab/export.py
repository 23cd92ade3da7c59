import csv
import io
import json
import math
from typing import Any, Dict, Iterator, List, Mapping, Sequence, Tuple

import numpy as np

from pairlab.data import Dataset, Normalization
from pairlab.errors import (ArgumentError, FormatError, InputFileError,
                            UnsupportedVersionError)
from pairlab.linear import LinearPair
from pairlab.networks import Mlp
from pairlab.pair import PairModel, PairSpec, kNetworks

kDatasetMagic = b"PAIRDS1\n"
kModelFormatVersion = 1
kFloatEncoding = "hex"
kFloatType = np.dtype("<f8")


def _read_bytes(path: str) -> bytes:
    try:
        with open(path, "rb") as fin:
            return fin.read()
    except OSError as e:
        raise InputFileError(f"{path}: {e.strerror}") from e


# Dataset container.


def to_pairds(dataset: Dataset) -> Iterator[bytes]:
    header = {
        "count": dataset.count,
        "n": dataset.n,
        "q": dataset.q,
        "shapes": dataset.shapes,
        "normalization": dataset.normalization.to_dict(),
        "provenance": dataset.provenance,
    }
    yield kDatasetMagic
    yield json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    yield dataset.X.astype(kFloatType).tobytes()
    yield dataset.Y.astype(kFloatType).tobytes()


def write_dataset(dataset: Dataset, path: str) -> None:
    with open(path, "wb") as fout:
        fout.writelines(to_pairds(dataset))


def parse_pairds(data: bytes, name: str = "<bytes>") -> Dataset:
    if not data.startswith(kDatasetMagic):
        raise FormatError(f"{name}: byte 0: not a dataset container")
    start = len(kDatasetMagic)
    end = data.find(b"\n", start)
    if end < 0:
        raise FormatError(f"{name}: byte {start}: unterminated header")
    try:
        header = json.loads(data[start:end].decode())
    except UnicodeDecodeError as e:
        raise FormatError(f"{name}: byte {start + e.start}: header is not UTF-8") from e
    except json.JSONDecodeError as e:
        raise FormatError(f"{name}: byte {start + e.pos}: {e.msg}") from e
    if not isinstance(header, dict):
        raise FormatError(f"{name}: byte {start}: header is not an object")

    try:
        count, n, q = (int(header[k]) for k in ("count", "n", "q"))
        normalization = Normalization.from_dict(header["normalization"])
        shapes = header.get("shapes")
        provenance = header.get("provenance")
    except KeyError as e:
        raise FormatError(f"{name}: header key {e} missing") from e
    except (TypeError, ValueError, ArgumentError) as e:
        raise FormatError(f"{name}: invalid header: {e}") from e
    if min(count, n, q) < 0:
        raise FormatError(f"{name}: negative dimensions in header")

    # Samples.
    body = end + 1
    expected = count * (n + q) * kFloatType.itemsize
    if len(data) - body != expected:
        raise FormatError(
            f"{name}: byte {body}: expected {expected} bytes of samples, found {len(data) - body}"
        )
    split = body + count * n * kFloatType.itemsize
    X = np.frombuffer(data, kFloatType, count * n, body).reshape(count, n)
    Y = np.frombuffer(data, kFloatType, count * q, split).reshape(count, q)
    return Dataset(X.astype(np.float64), Y.astype(np.float64), normalization,
                   provenance, shapes)


def read_dataset(path: str) -> Dataset:
    return parse_pairds(_read_bytes(path), path)


# Lossless float encoding.


def _encode_floats(a: np.ndarray) -> List[str]:
    return [float.hex(v) for v in np.asarray(a, dtype=np.float64).ravel().tolist()]


def _decode_floats(values: Any, shape: Sequence[int], path: str) -> np.ndarray:
    if not isinstance(values, list):
        raise FormatError(f"{path}: expected a list of floats")
    if len(values) != math.prod(shape):
        raise FormatError(
            f"{path}: expected {math.prod(shape)} values, found {len(values)}")
    try:
        flat = [float.fromhex(v) for v in values]
    except (TypeError, ValueError) as e:
        raise FormatError(f"{path}: {e}") from e
    return np.array(flat, dtype=np.float64).reshape(tuple(shape))


def _encode_array(a: np.ndarray) -> Dict[str, Any]:
    return {"shape": list(a.shape), "values": _encode_floats(a)}


def _decode_array(d: Any, path: str) -> np.ndarray:
    shape = _get(d, "shape", path)
    if not isinstance(shape, list) or not all(
            isinstance(s, int) and s >= 0 for s in shape):
        raise FormatError(f"{path}.shape: expected a list of sizes")
    return _decode_floats(_get(d, "values", path), shape, f"{path}.values")


def _get(d: Any, key: str, path: str) -> Any:
    if not isinstance(d, dict):
        raise FormatError(f"{path}: expected an object")
    if key not in d:
        raise FormatError(f"{path}: missing key '{key}'")
    return d[key]


def _to_json_object(items: Sequence[Tuple[str, Any]]) -> Iterator[str]:
    yield "{\n"
    for i, (key, value) in enumerate(items):
        is_last = i == len(items) - 1
        yield f"  {json.dumps(key)}: {json.dumps(value, sort_keys=True)}{'' if is_last else ','}\n"
    yield "}\n"


def read_json(path: str) -> Dict[str, Any]:
    text = _read_bytes(path)
    try:
        d = json.loads(text.decode())
    except UnicodeDecodeError as e:
        raise FormatError(f"{path}: byte {e.start}: not UTF-8") from e
    except json.JSONDecodeError as e:
        raise FormatError(
            f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(d, dict):
        raise FormatError(f"{path}: line 1, column 1: expected an object")
    return d


def _check_header(d: Dict[str, Any], kind: str, path: str) -> None:
    version = _get(d, "format_version", path)
    if version != kModelFormatVersion:
        raise UnsupportedVersionError(
            f"{path}: format_version {version!r} is not supported (expected {kModelFormatVersion})"
        )
    if _get(d, "float_encoding", path) != kFloatEncoding:
        raise FormatError(f"{path}.float_encoding: expected '{kFloatEncoding}'")
    if _get(d, "kind", path) != kind:
        raise FormatError(f"{path}.kind: expected '{kind}'")


def _encode_normalization(normalization: Normalization) -> Dict[str, str]:
    return {k: float.hex(v) for k, v in normalization.to_dict().items()}


def _decode_normalization(d: Any, path: str) -> Normalization:
    values = {}
    for key in ("x_mean", "x_std", "y_mean", "y_std"):
        try:
            values[key] = float.fromhex(_get(d, key, path))
        except (TypeError, ValueError) as e:
            raise FormatError(f"{path}.{key}: {e}") from e
    try:
        return Normalization.from_dict(values)
    except ArgumentError as e:
        raise FormatError(f"{path}: {e}") from e


# Pair models.


def to_model_json(model: PairModel) -> Iterator[str]:
    """Model file. Floats are stored as `float.hex` strings."""
    parameters = {
        role: [_encode_array(p) for p in model.networks[role].parameters()]
        for role in kNetworks
    }
    return _to_json_object([
        ("format_version", kModelFormatVersion),
        ("float_encoding", kFloatEncoding),
        ("kind", "pair"),
        ("specs", model.spec.to_dict()),
        ("normalization", _encode_normalization(model.normalization)),
        ("parameters", parameters),
    ])


def write_model(model: PairModel, path: str) -> None:
    with open(path, "w") as fout:
        fout.writelines(to_model_json(model))


def model_from_dict(d: Dict[str, Any], path: str = "model") -> PairModel:
    _check_header(d, "pair", path)
    try:
        spec = PairSpec.from_dict(_get(d, "specs", path))
    except (AttributeError, KeyError, TypeError, ArgumentError) as e:
        raise FormatError(f"{path}.specs: {e}") from e
    normalization = _decode_normalization(_get(d, "normalization", path),
                                          f"{path}.normalization")
    parameters = _get(d, "parameters", path)
    networks = {}
    for role in kNetworks:
        arrays = _get(parameters, role, f"{path}.parameters")
        where = f"{path}.parameters.{role}"
        if not isinstance(arrays, list):
            raise FormatError(f"{where}: expected a list of arrays")
        arrays = [_decode_array(a, f"{where}[{i}]") for i, a in enumerate(arrays)]
        try:
            networks[role] = Mlp(spec.networks[role], arrays[0::2], arrays[1::2])
        except ArgumentError as e:
            raise FormatError(f"{where}: {e}") from e
    return PairModel(networks, normalization)


def read_model(path: str) -> PairModel:
    return model_from_dict(read_json(path), path)


# Linear pairs.

kLinearArrays = ("E_x", "E_y", "M_fwd", "M_bwd", "sigma_x", "sigma_y",
                 "x_mean", "y_mean")


def to_linear_pair_json(pair: LinearPair) -> Iterator[str]:
    """Linear pair file. Decoders are stored implicitly as D = E^T."""
    return _to_json_object([
        ("format_version", kModelFormatVersion),
        ("float_encoding", kFloatEncoding),
        ("kind", "linear"),
        ("dims", {
            "n": pair.n,
            "q": pair.q,
            "latent_x": pair.latent_x,
            "latent_y": pair.latent_y,
        }),
        ("arrays", {k: _encode_array(getattr(pair, k)) for k in kLinearArrays}),
    ])


def write_linear_pair(pair: LinearPair, path: str) -> None:
    with open(path, "w") as fout:
        fout.writelines(to_linear_pair_json(pair))


def linear_pair_from_dict(d: Dict[str, Any],
                          path: str = "linear") -> LinearPair:
    _check_header(d, "linear", path)
    dims = _get(d, "dims", path)
    n, q, lx, ly = (_get(dims, k, f"{path}.dims")
                    for k in ("n", "q", "latent_x", "latent_y"))
    if not all(isinstance(v, int) and v > 0 for v in (n, q, lx, ly)):
        raise FormatError(f"{path}.dims: expected positive integers")
    expected = {
        "E_x": (lx, n),
        "E_y": (ly, q),
        "M_fwd": (ly, lx),
        "M_bwd": (lx, ly),
        "sigma_x": (lx,),
        "sigma_y": (ly,),
        "x_mean": (n,),
        "y_mean": (q,),
    }
    arrays = _get(d, "arrays", path)
    decoded = {}
    for key in kLinearArrays:
        where = f"{path}.arrays.{key}"
        a = _decode_array(_get(arrays, key, f"{path}.arrays"), where)
        if a.shape != expected[key]:
            raise FormatError(f"{where}: shape {a.shape} does not match {expected[key]}")
        decoded[key] = a
    return LinearPair(**decoded)


def read_linear_pair(path: str) -> LinearPair:
    return linear_pair_from_dict(read_json(path), path)


# Tables.


def _format_cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _csv_line(cells: Sequence[str]) -> str:
    buffer = io.StringIO()
    csv.writer(buffer, lineterminator="\n").writerow(cells)
    return buffer.getvalue()


def to_csv(columns: Sequence[str], rows: Sequence[Mapping[str, Any]],
           comment: str) -> Iterator[str]:
    if "\n" in comment:
        raise ArgumentError("table comment must fit on one line")
    yield f"# {comment}\n"
    yield _csv_line(columns)
    for row in rows:
        yield _csv_line([_format_cell(row[c]) for c in columns])


def write_csv(path: str, columns: Sequence[str],
              rows: Sequence[Mapping[str, Any]], comment: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fout:
        fout.writelines(to_csv(columns, rows, comment))


def read_csv(path: str) -> Tuple[str, List[Dict[str, str]]]:
    comment, newline, body = _read_bytes(path).decode("utf-8").partition("\n")
    if not comment.startswith("# ") or not newline:
        raise FormatError(f"{path}: line 1: expected a '#' comment and a header")

    # Line numbers count the comment line.
    reader = csv.reader(io.StringIO(body))
    try:
        columns = next(reader, None)
        if columns is None:
            raise FormatError(f"{path}: line 2: missing header")
        rows = []
        for cells in reader:
            if len(cells) != len(columns):
                raise FormatError(
                    f"{path}: line {reader.line_num + 1}: expected {len(columns)} cells, found {len(cells)}"
                )
            rows.append(dict(zip(columns, cells)))
    except csv.Error as e:
        raise FormatError(f"{path}: line {reader.line_num + 1}: {e}") from e
    return comment[2:], rows
