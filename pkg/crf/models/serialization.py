"""
Versioned text model files

Layout (UTF-8, one record per line, fields separated by TAB):

    [header]        format, version, model type, counts, regularizer, body checksum
    [labels]        one label per line, in index order
    [templates]     template definitions (same grammar as template files)
    [standardize]   observation key, mean, standard deviation
    [latent]        hidden-state count and observed labels (hidden-state models)
    [metadata]      sorted key/value provenance
    [features]      feature key, weight (shortest round-trip decimal)
    checksum        SHA-256 of every preceding byte

Weights with magnitude below 1e-12 are dropped. Saving the same model twice
gives identical bytes.
"""

import hashlib
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from crf.errors import (
    ChecksumError,
    CorpusFormatError,
    CRFError,
    MalformedSectionError,
    ModelFileError,
    VersionMismatchError,
)
from crf.features import FeatureSpace, parse_templates
from crf.models.chain import LinearChainModel
from crf.models.hcrf import HcrfModel
from crf.models.memm import MemmModel
from crf.objectives import LatentSpec, RegularizerSpec
from utils.logging_config import get_logger

logger = get_logger(__name__)

FORMAT_NAME = "crf-model"
FORMAT_VERSION = 1
ZERO_THRESHOLD = 1e-12
CHECKSUM_PREFIX = "checksum\t"

SECTIONS = ("header", "labels", "templates", "standardize", "latent", "metadata", "features")


def compute_checksum(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def model_type_of(model: LinearChainModel) -> str:
    if isinstance(model, HcrfModel):
        return "hcrf"
    if isinstance(model, MemmModel):
        return "memm"
    return model.metadata.get("model_type", "chain")


def _check_field(text: str, what: str) -> str:
    if "\t" in text or "\n" in text or "\r" in text:
        raise ModelFileError(f"{what} {text!r} contains a tab or newline and cannot be saved")
    return text


def _body_lines(model: LinearChainModel) -> Tuple[List[str], int]:
    lines = ["[labels]"]
    lines.extend(_check_field(label, "label") for label in model.space.labels)

    lines.append("[templates]")
    lines.extend(template.to_line() for template in model.templates)

    lines.append("[standardize]")
    for key in sorted(model.space.standardization):
        mean, sd = model.space.standardization[key]
        lines.append(f"{_check_field(key, 'observation')}\t{float(mean)!r}\t{float(sd)!r}")

    lines.append("[latent]")
    if isinstance(model, HcrfModel):
        lines.append(f"hidden_states\t{model.latent.hidden_states}")
        lines.extend(f"label\t{_check_field(label, 'label')}" for label in model.latent.labels)

    lines.append("[metadata]")
    for key in sorted(model.metadata):
        lines.append(
            f"{_check_field(key, 'metadata key')}\t{_check_field(str(model.metadata[key]), 'metadata value')}"
        )

    lines.append("[features]")
    kept = 0
    for index, key in enumerate(model.space.features):
        weight = float(model.weights[index])
        if abs(weight) < ZERO_THRESHOLD:
            continue
        lines.append(f"{_check_field(key, 'feature')}\t{weight!r}")
        kept += 1
    return lines, kept


def dumps_model(model: LinearChainModel) -> str:
    """Serialize a model to the text format"""
    body, kept = _body_lines(model)
    body_text = "\n".join(body) + "\n"
    reg = model.regularizer
    header = [
        "[header]",
        f"format\t{FORMAT_NAME}",
        f"version\t{FORMAT_VERSION}",
        f"model_type\t{model_type_of(model)}",
        f"labels\t{model.space.num_labels}",
        f"templates\t{len(model.templates)}",
        f"features\t{kept}",
        f"regularizer\t{reg.kind}",
        f"sigma2\t{float(reg.sigma2)!r}",
        f"alpha\t{float(reg.alpha)!r}",
        f"body_checksum\t{compute_checksum(body_text)}",
    ]
    text = "\n".join(header) + "\n" + body_text
    return text + f"{CHECKSUM_PREFIX}{compute_checksum(text)}\n"


def save_model(model: LinearChainModel, path: Union[str, Path]) -> Path:
    """Write a model file; returns the path written"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = dumps_model(model)
    # newline="" keeps the bytes identical across platforms
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)
    logger.info(
        "model_saved",
        path=str(path),
        model_type=model_type_of(model),
        features=model.space.num_features,
    )
    return path


# =============================================================================
# Loading
# =============================================================================


def _verify_checksum(text: str) -> str:
    body, separator, last = text.rstrip("\n").rpartition("\n")
    if not separator or not last.startswith(CHECKSUM_PREFIX):
        raise ChecksumError("model file has no checksum line (truncated?)")
    content = body + "\n"
    if last[len(CHECKSUM_PREFIX) :] != compute_checksum(content):
        raise ChecksumError("model file checksum does not match its content")
    return content


def _split_sections(content: str) -> Dict[str, List[str]]:
    sections: Dict[str, List[str]] = {}
    current = None
    for line_number, line in enumerate(content.split("\n")[:-1], start=1):
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            if current not in SECTIONS:
                raise MalformedSectionError(f"line {line_number}: unknown section [{current}]")
            if current in sections:
                raise MalformedSectionError(f"line {line_number}: duplicate section [{current}]")
            sections[current] = []
        elif current is None:
            raise MalformedSectionError(f"line {line_number}: content before the first section")
        else:
            sections[current].append(line)
    missing = [name for name in SECTIONS if name not in sections]
    if missing:
        raise MalformedSectionError(f"missing sections: {', '.join(missing)}")
    return sections


def _pairs(lines: List[str], section: str) -> List[Tuple[str, str]]:
    pairs = []
    for line in lines:
        key, separator, value = line.partition("\t")
        if not separator:
            raise MalformedSectionError(f"[{section}] line {line!r} is not key<TAB>value")
        pairs.append((key, value))
    return pairs


def _header(lines: List[str]) -> Dict[str, str]:
    header = dict(_pairs(lines, "header"))
    if header.get("format") != FORMAT_NAME:
        raise MalformedSectionError(f"not a model file (format {header.get('format')!r})")
    if header.get("version") != str(FORMAT_VERSION):
        raise VersionMismatchError(
            f"model file version {header.get('version')!r}, expected {FORMAT_VERSION}"
        )
    return header


def loads_model(text: str) -> LinearChainModel:
    """
    Parse a model file's text

    Raises:
        ChecksumError: Missing or wrong checksum (e.g. a truncated file)
        VersionMismatchError: Unsupported format version
        MalformedSectionError: Any structural problem in the sections
    """
    content = _verify_checksum(text)
    header_end = content.find("\n[labels]\n")
    if header_end < 0:
        raise MalformedSectionError("missing sections: labels")
    body_text = content[header_end + 1 :]
    header = _header(content[:header_end].split("\n")[1:])
    if header.get("body_checksum") != compute_checksum(body_text):
        raise ChecksumError("model body checksum does not match the header")
    sections = _split_sections(content)

    try:
        space = FeatureSpace()
        for label in sections["labels"]:
            space.labels.add(label)
        templates = parse_templates("\n".join(sections["templates"]))
        for key, values in _pairs(sections["standardize"], "standardize"):
            mean, sd = values.split("\t")
            space.standardization[key] = (float(mean), float(sd))

        weights_by_key: Dict[str, float] = {}
        for key, value in _pairs(sections["features"], "features"):
            space.add_feature_key(key)
            weights_by_key[key] = float(value)
        space.freeze()
        weights = np.array([weights_by_key[key] for key in space.features], dtype=np.float64)

        metadata = dict(_pairs(sections["metadata"], "metadata"))
        regularizer = RegularizerSpec(
            kind=header["regularizer"], sigma2=float(header["sigma2"]), alpha=float(header["alpha"])
        )
        if int(header["labels"]) != space.num_labels or int(header["features"]) != len(weights):
            raise MalformedSectionError("header counts do not match the sections")
    except MalformedSectionError:
        raise
    except (CorpusFormatError, CRFError, KeyError, ValueError) as e:
        raise MalformedSectionError(f"malformed model file: {e}") from e

    model_type = header.get("model_type", "chain")
    arguments = (space, templates, weights, regularizer, metadata)
    if model_type == "memm":
        return MemmModel(*arguments)
    if model_type == "hcrf":
        latent_pairs = _pairs(sections["latent"], "latent")
        try:
            hidden = int(dict(latent_pairs)["hidden_states"])
            labels = [value for key, value in latent_pairs if key == "label"]
            latent = LatentSpec(hidden_states=hidden, labels=labels)
        except (KeyError, ValueError) as e:
            raise MalformedSectionError(f"malformed [latent] section: {e}") from e
        return HcrfModel(*arguments, latent=latent)
    if model_type not in ("chain", "logreg"):
        raise MalformedSectionError(f"unknown model type {model_type!r}")
    return LinearChainModel(*arguments)


def load_model(path: Union[str, Path]) -> LinearChainModel:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            text = handle.read()
    except OSError as e:
        raise ModelFileError(f"cannot read model file {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise ChecksumError(f"model file {path} is not valid UTF-8: {e}") from e
    model = loads_model(text)
    logger.info("model_loaded", path=str(path), features=model.space.num_features)
    return model
