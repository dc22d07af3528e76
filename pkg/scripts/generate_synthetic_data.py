#!/usr/bin/env python3
"""
Script para generar el dataset sintético (manifest.csv + imágenes PGM)
"""

import sys
import argparse
import logging
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.config import DATA_PATH, LOG_FORMAT, LOG_LEVEL
from src.data import load_dataset, synth_generate

logging.basicConfig(
    level=getattr(logging, LOG_LEVEL.upper(), logging.INFO),
    format=LOG_FORMAT
)
logger = logging.getLogger(__name__)


def generate(out_dir: Path, patients: int, per_patient: int, seed: int, signal: float, verify: bool) -> bool:
    """Genera el dataset y, opcionalmente, lo relee desde disco"""

    print("\n" + "=" * 60)
    print("🧪 GENERANDO DATASET SINTÉTICO")
    print("=" * 60 + "\n")

    try:
        samples = synth_generate(patients, per_patient, seed, signal, out_dir)
        class_one = sum(s.label for s in samples)
        logger.info(f"📊 {len(samples)} imágenes: {len(samples) - class_one} clase 0 / {class_one} clase 1")

        if verify:
            logger.info("🔍 Releyendo el manifiesto...")
            reloaded = load_dataset(out_dir / 'manifest.csv')
            mismatched = sum(
                1 for a, b in zip(samples, reloaded)
                if a.label != b.label or a.patient_id != b.patient_id or (a.pixels != b.pixels).any()
            )
            if mismatched or len(reloaded) != len(samples):
                logger.error(f"❌ {mismatched} muestras no coinciden tras releer el manifiesto")
                return False
            logger.info("✅ El manifiesto se relee sin diferencias")

        print("\n" + "=" * 60)
        print(f"🎉 DATASET LISTO EN {out_dir}")
        print("=" * 60 + "\n")
        return True

    except Exception as e:
        logger.error(f"❌ Error generando el dataset: {e}")
        return False


def main():
    parser = argparse.ArgumentParser(description='Genera el dataset sintético de dos clases por paciente')
    parser.add_argument('--out', default=DATA_PATH, help='Directorio de destino (default: %(default)s)')
    parser.add_argument('--patients', type=int, default=12)
    parser.add_argument('--per-patient', type=int, default=34)
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--signal', type=float, default=0.8)
    parser.add_argument('--verify', action='store_true', help='Relee el manifiesto y compara')
    args = parser.parse_args()

    ok = generate(Path(args.out), args.patients, args.per_patient, args.seed, args.signal, args.verify)
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
