"""Standalone export of a query: a directory that re-runs itself headlessly.

The artifact pins everything that affects the result by value (query
document, derivation config, evaluation config) so running it against the
source bundle reproduces the exact segment list, and running it against a
future recording applies identical rules.
"""

from __future__ import annotations

import json
import stat
from pathlib import Path

from typing import Optional

from .derive import DerivationConfig
from .engine import EvaluationConfig, to_json_bytes
from .errors import IoError, ValidationFailed
from .query import QueryNode, to_document, validate, validate_structure
from .store import SessionBundle

_RUNNER = '''#!/usr/bin/env python3
"""Headless runner for an exported scene query.

Usage: python3 run.py BUNDLE_DIR PERSON [--out FILE]
Evaluates the pinned query against any bundle directory and writes the
segments JSON (stdout by default).  Requires the scenequery package.
Exit codes: 0 ok, 2 validation, 3 io, 4 not-found; errors are emitted as
JSON on stderr.
"""
import argparse
import json
import sys
from pathlib import Path

from scenequery.derive import DerivationConfig
from scenequery.engine import EvaluationConfig, evaluate_headless, to_json_bytes
from scenequery.errors import (
    IoError,
    MissingManifest,
    PersonUnknown,
    SceneQueryError,
    StorageError,
)

HERE = Path(__file__).resolve().parent


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("bundle", help="bundle directory to evaluate against")
    parser.add_argument("person", help="analysis target person id")
    parser.add_argument("--out", help="output file (default: stdout)")
    args = parser.parse_args()

    try:
        if not Path(args.bundle).is_dir():
            raise IoError(f"bundle directory not found: {args.bundle}")
        derivation_raw = json.loads((HERE / "derivation.json").read_text(encoding="utf-8"))
        derivation = DerivationConfig(**{
            k: tuple(v) if isinstance(v, list) else v for k, v in derivation_raw.items()
        })
        eval_raw = json.loads((HERE / "eval_config.json").read_text(encoding="utf-8"))
        cfg = EvaluationConfig(**eval_raw)
        document = (HERE / "query.json").read_text(encoding="utf-8")
        payload = evaluate_headless(document, args.bundle, args.person,
                                    cfg=cfg, derivation=derivation)
    except SceneQueryError as exc:
        sys.stderr.write(json.dumps(exc.to_json(), ensure_ascii=False) + "\\n")
        if isinstance(exc, PersonUnknown):
            return 4
        if isinstance(exc, (IoError, MissingManifest, StorageError)):
            return 3
        return 2

    data = to_json_bytes(payload)
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
    return 0


if __name__ == "__main__":
    sys.exit(main())
'''


def export_standalone(node: QueryNode, out_dir: str | Path,
                      derivation: DerivationConfig, cfg: EvaluationConfig,
                      bundle: Optional[SessionBundle] = None) -> Path:
    """Write the self-contained artifact directory; rejects invalid queries.

    With a bundle the query is fully type-checked against it; without one
    only the bundle-independent structure can be verified.
    """
    errors = validate(node, bundle) if bundle is not None else validate_structure(node)
    if errors:
        raise ValidationFailed(errors)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "query.json").write_text(to_document(node), encoding="utf-8")
        (out / "derivation.json").write_bytes(to_json_bytes(derivation.to_json()))
        (out / "eval_config.json").write_bytes(to_json_bytes(cfg.to_json()))
        runner = out / "run.py"
        runner.write_text(_RUNNER, encoding="utf-8")
        runner.chmod(runner.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
        (out / "README.txt").write_text(
            "Exported scene query.\n"
            "Run:  python3 run.py BUNDLE_DIR PERSON [--out FILE]\n"
            "The query, derivation config, and evaluation config are pinned\n"
            "in this directory; edits here change what the runner detects.\n",
            encoding="utf-8",
        )
    except OSError as exc:
        raise IoError(str(exc))
    return out
