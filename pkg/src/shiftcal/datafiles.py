"""Dataset and result file I/O.

All CSV files use '.' as the decimal separator, no thousands grouping, and
a fixed column order; output files carry a leading ``# format_version=N``
comment line and input readers skip ``#`` comment lines. Parse failures
name the file and line.
"""

import csv
import json
import math

import numpy as np

from shiftcal.simulation import TrialResult

FORMAT_VERSION = 1

RESULTS_COLUMNS = (
    "env_id", "split_id", "method", "alpha", "coverage",
    "mean_set_size", "threshold", "recall",
)


class DataFormatError(ValueError):
    pass


def _rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        for lineno, rec in enumerate(reader, start=1):
            yield lineno, rec


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".12g")
    return str(value)


def _parse_float(raw, path, lineno, column):
    try:
        return float(raw)
    except ValueError:
        raise DataFormatError(
            f"{path}, line {lineno}, column {column!r}: not a number: {raw!r}"
        ) from None


def load_scores_csv(path):
    """Read a score dataset: header ``id,score`` or ``id,domain,score``.

    Returns (ids, scores, domains) with domains None when the file carries
    no domain column. Ids must be unique.
    """
    it = _rows(path)
    try:
        _, header = next(it)
    except StopIteration:
        raise DataFormatError(f"{path}: empty file") from None
    if header == ["id", "score"]:
        with_domain = False
    elif header == ["id", "domain", "score"]:
        with_domain = True
    else:
        raise DataFormatError(
            f"{path}, line 1: expected header 'id,score' or 'id,domain,score', "
            f"got {','.join(header)!r}"
        )
    ids, scores, domains = [], [], []
    seen = set()
    for lineno, rec in it:
        if len(rec) != len(header):
            raise DataFormatError(f"{path}, line {lineno}: wrong number of columns")
        if rec[0] in seen:
            raise DataFormatError(f"{path}, line {lineno}: duplicate id {rec[0]!r}")
        seen.add(rec[0])
        ids.append(rec[0])
        if with_domain:
            try:
                domains.append(int(rec[1]))
            except ValueError:
                raise DataFormatError(
                    f"{path}, line {lineno}, column 'domain': not an integer: {rec[1]!r}"
                ) from None
        scores.append(_parse_float(rec[-1], path, lineno, "score"))
    if not ids:
        raise DataFormatError(f"{path}: no data rows")
    return ids, np.array(scores), (np.array(domains) if with_domain else None)


def load_embeddings_csv(path):
    """Read embeddings: header ``id,e_1,...,e_d`` (d inferred from the header)."""
    it = _rows(path)
    try:
        _, header = next(it)
    except StopIteration:
        raise DataFormatError(f"{path}: empty file") from None
    dim = len(header) - 1
    if header[0] != "id" or dim < 1 or header[1:] != [f"e_{i}" for i in range(1, dim + 1)]:
        raise DataFormatError(f"{path}, line 1: expected header 'id,e_1,...,e_d'")
    ids, vectors = [], []
    seen = set()
    for lineno, rec in it:
        if len(rec) != dim + 1:
            raise DataFormatError(f"{path}, line {lineno}: wrong number of columns")
        if rec[0] in seen:
            raise DataFormatError(f"{path}, line {lineno}: duplicate id {rec[0]!r}")
        seen.add(rec[0])
        ids.append(rec[0])
        vectors.append([_parse_float(v, path, lineno, f"e_{j+1}")
                        for j, v in enumerate(rec[1:])])
    if not ids:
        raise DataFormatError(f"{path}: no data rows")
    return ids, np.array(vectors)


def load_sample_csv(path):
    """Read a diagnostics sample: header ``id,domain`` or ``id,domain,environment``."""
    it = _rows(path)
    try:
        _, header = next(it)
    except StopIteration:
        raise DataFormatError(f"{path}: empty file") from None
    if header == ["id", "domain"]:
        with_env = False
    elif header == ["id", "domain", "environment"]:
        with_env = True
    else:
        raise DataFormatError(
            f"{path}, line 1: expected header 'id,domain[,environment]'"
        )
    ids, domains, envs = [], [], []
    for lineno, rec in it:
        if len(rec) != len(header):
            raise DataFormatError(f"{path}, line {lineno}: wrong number of columns")
        ids.append(rec[0])
        try:
            domains.append(int(rec[1]))
        except ValueError:
            raise DataFormatError(
                f"{path}, line {lineno}, column 'domain': not an integer: {rec[1]!r}"
            ) from None
        envs.append(rec[2] if with_env else "all")
    if not ids:
        raise DataFormatError(f"{path}: no data rows")
    return ids, np.array(domains), envs


def write_results_csv(path, results):
    with open(path, "w", newline="") as fh:
        fh.write(f"# format_version={FORMAT_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULTS_COLUMNS)
        for r in results:
            writer.writerow([
                r.env_id, r.split_id, r.method, _fmt(r.alpha), _fmt(r.coverage),
                _fmt(r.mean_set_size), _fmt(r.threshold), _fmt(r.recall),
            ])


def read_results_csv(path):
    it = _rows(path)
    try:
        _, header = next(it)
    except StopIteration:
        raise DataFormatError(f"{path}: empty file") from None
    if tuple(header) != RESULTS_COLUMNS:
        raise DataFormatError(f"{path}, line 1: unexpected results header")
    out = []
    for lineno, rec in it:
        if len(rec) != len(RESULTS_COLUMNS):
            raise DataFormatError(f"{path}, line {lineno}: wrong number of columns")
        out.append(TrialResult(
            env_id=int(rec[0]),
            split_id=int(rec[1]),
            method=rec[2],
            alpha=_parse_float(rec[3], path, lineno, "alpha"),
            coverage=None if rec[4] == "" else _parse_float(rec[4], path, lineno, "coverage"),
            mean_set_size=None if rec[5] == "" else _parse_float(rec[5], path, lineno, "mean_set_size"),
            threshold=_parse_float(rec[6], path, lineno, "threshold"),
            recall=None if rec[7] == "" else _parse_float(rec[7], path, lineno, "recall"),
        ))
    return out


def write_json_report(path, payload):
    payload = {"format_version": FORMAT_VERSION, **payload}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
