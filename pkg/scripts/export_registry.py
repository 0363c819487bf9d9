"""Export the observable registry as a JSON document."""

import argparse
import json
import logging
import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.config.settings import settings
from src.core.logging import setup_logging
from src.data.peres_mermin import (
    FIXED_SIGNS,
    compute_fixed_signs,
    context_table,
    registry_document,
    verify_context_algebra,
)

# Setup logging
setup_logging()
logger = logging.getLogger(__name__)


def export_registry(out_path: Path) -> dict:
    """Verify the registry and write it to ``out_path``.

    Args:
        out_path: Destination JSON file
    """
    logger.info("=" * 80)
    logger.info("REGISTRY EXPORT STARTING")
    logger.info("=" * 80)

    for seq in context_table():
        algebra = verify_context_algebra(seq)
        logger.info(
            f"  {seq.id}: commuting={algebra.commuting}, "
            f"product={'+' if algebra.product_sign > 0 else '-'}I"
        )

    signs = compute_fixed_signs()
    if signs != FIXED_SIGNS:
        logger.error(
            "Frozen fixed signs disagree with the ideal state",
            extra={"frozen": FIXED_SIGNS, "computed": signs},
        )
        sys.exit(1)
    logger.info("Fixed signs match the ideal-state expectations")

    document = registry_document()
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(
        json.dumps(document, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    logger.info(f"✅ Registry written to {out_path}")
    logger.info("=" * 80)
    return document


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Export the observable registry")
    parser.add_argument(
        "--out",
        default=str(Path(settings.output_dir) / "registry.json"),
        help="Destination file",
    )
    args = parser.parse_args()
    export_registry(Path(args.out))
