"""
Experiment files, persistence and run artifacts.

Experiment files are line oriented:

  # comment
  experiment.kind = steady
  model.k1 = 1
  model.l = 0
  grid.n_radial = 2048

Every emitted file is text (or the declared binary snapshot) and is listed
with its sha256 in `manifest.json`, which is always written last.
"""

import csv
import hashlib
import json
import math
import re
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from cammvp.casimir import validate_assumptions
from cammvp.config import PROFILE_VERSION
from cammvp.models import (
  DIAGNOSTIC_COLUMNS,
  AnsatzState,
  CasimirModel,
  ConfigError,
  DiagnosticSeries,
  ExperimentConfig,
  ExperimentSection,
  FileEntry,
  FormatError,
  FunctionalReport,
  GridDensity,
  GridSection,
  ModelSection,
  PerturbationSection,
  RunManifest,
  ScalingSection,
  SimSection,
  SolverSection,
)

PathLike = Union[str, Path]

SECTIONS: Dict[str, type] = {
  "experiment": ExperimentSection,
  "model": ModelSection,
  "grid": GridSection,
  "solver": SolverSection,
  "sim": SimSection,
  "perturbation": PerturbationSection,
  "scaling": ScalingSection,
}

REQUIRED_SECTIONS: Dict[str, Tuple[str, ...]] = {
  "steady": ("model", "grid"),
  "scaling": ("model",),
  "stability": ("model", "sim"),
  "sim": ("model", "sim"),
  "checks": (),
}

LINE_PATTERN = re.compile(r"^([A-Za-z_]\w*)\.([A-Za-z_]\w*)\s*=\s*(.*?)\s*$")

# ============================================================================
# EXPERIMENT FILES
# ============================================================================


def _section_errors(
  name: str, error: ValidationError, lines: Dict[str, int], first_line: int
) -> List[str]:
  messages = []
  for item in error.errors():
    key = str(item["loc"][0]) if item["loc"] else ""
    line = lines.get(key, first_line)
    if item["type"] == "extra_forbidden":
      messages.append(f"line {line}: unknown key {name}.{key}")
    elif key:
      messages.append(f"line {line}: {name}.{key}: {item['msg']}")
    else:
      messages.append(f"line {line}: [{name}] {item['msg']}")
  return messages


def parse_config(
  text: str, allow_out_of_range: bool = False, kind: Optional[str] = None
) -> ExperimentConfig:
  """Parse and validate an experiment file.

  `kind` (the CLI verb) fills in experiment.kind and must agree with it when
  the file sets one.

  Raises ConfigError with every problem found, each prefixed by its line.
  """
  errors: List[str] = []
  raw: Dict[str, Dict[str, str]] = {}
  where: Dict[str, Dict[str, int]] = {}

  for number, line in enumerate(text.splitlines(), start=1):
    content = line.split("#", 1)[0].strip()
    if not content:
      continue
    match = LINE_PATTERN.match(content)
    if not match:
      errors.append(f"line {number}: expected `section.key = value`, got {content!r}")
      continue
    section, key, value = match.groups()
    if section not in SECTIONS:
      errors.append(f"line {number}: unknown section [{section}]")
      continue
    seen = where.setdefault(section, {})
    if key in seen:
      errors.append(
        f"line {number}: duplicate key {section}.{key} (first set on line {seen[key]})"
      )
      continue
    seen[key] = number
    raw.setdefault(section, {})[key] = value

  parsed: Dict[str, BaseModel] = {}
  for section, values in raw.items():
    lines = where[section]
    try:
      parsed[section] = SECTIONS[section].model_validate(values)
    except ValidationError as e:
      errors.extend(_section_errors(section, e, lines, min(lines.values())))

  experiment = parsed.get("experiment", ExperimentSection())
  if kind is not None:
    declared = where.get("experiment", {}).get("kind")
    if declared is not None and experiment.kind != kind:
      errors.append(
        f"line {declared}: experiment.kind = {experiment.kind} contradicts the "
        f"{kind!r} command"
      )
    elif kind in REQUIRED_SECTIONS:
      experiment = experiment.model_copy(update={"kind": kind})
  kind = experiment.kind
  for section in REQUIRED_SECTIONS.get(kind, ()):
    if section not in raw:
      errors.append(f"missing section [{section}] for experiment kind {kind!r}")

  if "model" in parsed:
    model_lines = where["model"]
    first = model_lines.get("k1", min(model_lines.values()))
    try:
      model = parsed["model"].to_model()
    except ValidationError as e:
      errors.extend(_section_errors("model", e, model_lines, first))
    else:
      report = validate_assumptions(model)
      permitted = allow_out_of_range or experiment.allow_out_of_range
      if not report.exponent_range and not permitted:
        errors.append(
          f"line {first}: exponents {[k for _, k in model.terms]} violate the "
          f"range 0 < k1, k2, k3 < l + 3/2 = {model.l + 1.5:g} "
          "(use --allow-out-of-range for contrast runs)"
        )

  if errors:
    raise ConfigError(errors)
  if allow_out_of_range and not experiment.allow_out_of_range:
    experiment = experiment.model_copy(update={"allow_out_of_range": True})
  parsed["experiment"] = experiment
  return ExperimentConfig(**parsed, sections_present=sorted(raw))


def load_config(
  path: PathLike, allow_out_of_range: bool = False, kind: Optional[str] = None
) -> ExperimentConfig:
  text = Path(path).read_text()
  try:
    return parse_config(text, allow_out_of_range=allow_out_of_range, kind=kind)
  except ConfigError as e:
    raise ConfigError([f"{path}: {message}" for message in e.errors]) from None


# ============================================================================
# CHECKSUMS
# ============================================================================


def sha256_of(path: PathLike) -> str:
  digest = hashlib.sha256()
  with open(path, "rb") as f:
    for chunk in iter(lambda: f.read(1 << 20), b""):
      digest.update(chunk)
  return digest.hexdigest()


def file_entry(path: PathLike, root: PathLike) -> FileEntry:
  path = Path(path)
  return FileEntry(
    path=str(path.relative_to(root)), sha256=sha256_of(path), size=path.stat().st_size
  )


def _jsonable(value: Any) -> Any:
  """numpy scalars/arrays and tuples to plain JSON values; inf/nan to None."""
  if isinstance(value, dict):
    return {str(k): _jsonable(v) for k, v in value.items()}
  if isinstance(value, (list, tuple)):
    return [_jsonable(v) for v in value]
  if isinstance(value, np.ndarray):
    return _jsonable(value.tolist())
  if isinstance(value, np.generic):
    value = value.item()
  if isinstance(value, float) and not math.isfinite(value):
    return None
  return value


def write_json(path: PathLike, payload: Any) -> Path:
  path = Path(path)
  path.parent.mkdir(parents=True, exist_ok=True)
  path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
  return path


def _split_header(
  path: PathLike, kind: str, header_lines: int
) -> Tuple[List[str], str]:
  """(header lines after the version line, checked body) of a v1 text file."""
  text = Path(path).read_text()
  lines = text.split("\n")
  prefix = f"# camm-vp {kind} v"
  if not lines or not lines[0].startswith(prefix):
    raise FormatError(f"{path}: not a camm-vp {kind} file")
  version = lines[0][len(prefix) :].strip()
  if version != str(PROFILE_VERSION):
    raise FormatError(
      f"{path}: {kind} format v{version} is not readable by this version "
      f"(expects v{PROFILE_VERSION})"
    )
  header = lines[1 : 1 + header_lines]
  checksum = lines[1 + header_lines] if len(lines) > 1 + header_lines else ""
  if not checksum.startswith("# checksum sha256="):
    raise FormatError(f"{path}: missing checksum line")
  body = "\n".join(lines[2 + header_lines :])
  if hashlib.sha256(body.encode()).hexdigest() != checksum.split("=", 1)[1]:
    raise FormatError(f"{path}: checksum mismatch (truncated or edited)")
  return header, body


def _write_checked(path: PathLike, kind: str, header: List[str], body: str) -> Path:
  path = Path(path)
  path.parent.mkdir(parents=True, exist_ok=True)
  digest = hashlib.sha256(body.encode()).hexdigest()
  lines = [f"# camm-vp {kind} v{PROFILE_VERSION}", *header]
  lines.append(f"# checksum sha256={digest}")
  path.write_text("\n".join(lines) + "\n" + body)
  return path


def _rows(columns: Sequence[np.ndarray]) -> str:
  table = np.column_stack([np.asarray(c, dtype=float) for c in columns]).tolist()
  return "".join(" ".join(repr(x) for x in row) + "\n" for row in table)


# ============================================================================
# STEADY-STATE PROFILES
# ============================================================================

PROFILE_COLUMNS = ("r", "U", "rho", "m", "psi")


def store_state(state: AnsatzState, path: PathLike) -> Path:
  """Profile file: version line, model and summary JSON, checksum, columns."""
  summary = {
    "E0": state.E0,
    "R_supp": state.R_supp if math.isfinite(state.R_supp) else None,
    "M": state.M,
    "compact": state.compact,
    "admissible": state.admissible,
    "report": state.report.model_dump() if state.report else None,
    "meta": state.meta,
  }
  header = [
    f"# model {json.dumps(state.model.model_dump(exclude={'k3'}), sort_keys=True)}",
    f"# summary {json.dumps(_jsonable(summary), sort_keys=True)}",
  ]
  body = " ".join(PROFILE_COLUMNS) + "\n"
  body += _rows([state.r, state.U, state.rho, state.m, state.psi])
  return _write_checked(path, "profile", header, body)


def load_state(path: PathLike) -> AnsatzState:
  header, body = _split_header(path, "profile", 2)
  model = CasimirModel(**json.loads(header[0][len("# model ") :]))
  summary = json.loads(header[1][len("# summary ") :])
  lines = body.splitlines()
  if not lines or tuple(lines[0].split()) != PROFILE_COLUMNS:
    raise FormatError(f"{path}: unexpected profile columns")
  table = np.array([[float(x) for x in line.split()] for line in lines[1:]])
  r, U, rho, m, psi = table.T
  R_supp = summary["R_supp"]
  report = summary["report"]
  return AnsatzState(
    model=model,
    E0=summary["E0"],
    r=r,
    psi=psi,
    U=U,
    rho=rho,
    m=m,
    R_supp=math.inf if R_supp is None else R_supp,
    M=summary["M"],
    compact=summary["compact"],
    admissible=summary["admissible"],
    report=FunctionalReport(**report) if report else None,
    meta=summary["meta"],
  )


# ============================================================================
# PHASE-SPACE GRIDS
# ============================================================================


def store_grid(f: GridDensity, path: PathLike) -> Path:
  """Axes on three lines, then one row of n_w values per (r, u) node pair."""
  header = [f"# shape {json.dumps(list(f.shape))}"]
  body = "".join(
    f"{name} " + " ".join(repr(x) for x in axis.tolist()) + "\n"
    for name, axis in (("r", f.r), ("u", f.u), ("w", f.w))
  )
  body += _rows(f.values.reshape(-1, f.shape[2]).T)
  return _write_checked(path, "grid", header, body)


def load_grid(path: PathLike) -> GridDensity:
  header, body = _split_header(path, "grid", 1)
  shape = tuple(json.loads(header[0][len("# shape ") :]))
  lines = body.splitlines()
  axes = {}
  for line in lines[:3]:
    name, *values = line.split()
    axes[name] = np.array([float(x) for x in values])
  values = np.array([[float(x) for x in line.split()] for line in lines[3:]])
  if values.size != int(np.prod(shape)):
    raise FormatError(f"{path}: expected {shape} values, found {values.size}")
  values = values.reshape(shape)
  return GridDensity(r=axes["r"], u=axes["u"], w=axes["w"], values=values)


# ============================================================================
# DIAGNOSTICS AND PLOT DATA
# ============================================================================


def write_diagnostics(series: DiagnosticSeries, path: PathLike) -> Path:
  path = Path(path)
  path.parent.mkdir(parents=True, exist_ok=True)
  with open(path, "w", newline="") as f:
    writer = csv.writer(f)
    writer.writerow(DIAGNOSTIC_COLUMNS)
    for sample in series.samples:
      writer.writerow([repr(float(x)) for x in sample.row()])
  return path


def read_diagnostics(path: PathLike) -> Dict[str, np.ndarray]:
  with open(path, newline="") as f:
    rows = list(csv.reader(f))
  if not rows or tuple(rows[0]) != DIAGNOSTIC_COLUMNS:
    raise FormatError(f"{path}: unexpected diagnostic columns")
  table = np.array([[float(x) for x in row] for row in rows[1:]]).reshape(
    -1, len(DIAGNOSTIC_COLUMNS)
  )
  return {name: table[:, i] for i, name in enumerate(DIAGNOSTIC_COLUMNS)}


def write_columns(
  path: PathLike, names: Sequence[str], columns: Sequence[Iterable[float]]
) -> Path:
  """Whitespace-separated x/y column file with a `# name name` header."""
  path = Path(path)
  path.parent.mkdir(parents=True, exist_ok=True)
  path.write_text("# " + " ".join(names) + "\n" + _rows(list(columns)))
  return path


def write_plot_readme(directory: PathLike, plots: Dict[str, str]) -> Path:
  """README describing what to draw from each column file."""
  lines = [
    "# Plot data",
    "",
    "Column files are whitespace separated with a `# name ...` header line.",
    "Draw the second and later columns against the first.",
    "",
  ]
  for name in sorted(plots):
    lines.append(f"- `{name}`: {plots[name]}")
  path = Path(directory) / "README.md"
  path.write_text("\n".join(lines) + "\n")
  return path


# ============================================================================
# MANIFEST
# ============================================================================

MANIFEST_NAME = "manifest.json"


def finalize_manifest(manifest: RunManifest, out: PathLike) -> Path:
  """Inventory every file under out (except the manifest), then write it last."""
  out = Path(out)
  files = sorted(
    p for p in out.rglob("*") if p.is_file() and p.name != MANIFEST_NAME
  )
  manifest.files = [file_entry(p, out) for p in files]
  failed = [c.name for c in manifest.checks if not c.passed]
  manifest.exit_code = 1 if (failed or manifest.errors) else 0
  return write_json(out / MANIFEST_NAME, manifest.model_dump(mode="json"))


def load_manifest(path: PathLike) -> RunManifest:
  return RunManifest(**json.loads(Path(path).read_text()))


def verify_manifest(out: PathLike) -> List[str]:
  """Problems found when re-checking a run directory against its manifest."""
  out = Path(out)
  manifest = load_manifest(out / MANIFEST_NAME)
  problems = []
  for entry in manifest.files:
    path = out / entry.path
    if not path.exists():
      problems.append(f"missing file {entry.path}")
    elif sha256_of(path) != entry.sha256:
      problems.append(f"checksum mismatch for {entry.path}")
  expected = 1 if (manifest.errors or any(not c.passed for c in manifest.checks)) else 0
  if manifest.exit_code != expected:
    problems.append(f"exit code {manifest.exit_code} contradicts the check summary")
  return problems


def format_errors(errors: Optional[List[str]]) -> str:
  return "\n".join(f"  - {e}" for e in errors or [])
