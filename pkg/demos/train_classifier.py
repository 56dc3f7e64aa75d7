"""Train the sound classifier on a synthetic corpus and inspect its accuracy."""
import tempfile
from pathlib import Path

import numpy as np

from edgesound.classifier import (
    CLASS_LABELS,
    LabeledDataset,
    evaluate,
    init_model,
    load_model,
    save_model,
    train,
)
from edgesound.dsp import extract_features
from edgesound.synth import synth_clip

CLIPS_PER_CLASS = 8
EPOCHS = 800


def main() -> None:
    print(f"extracting features for {CLIPS_PER_CLASS} clips x "
          f"{len(CLASS_LABELS)} classes ...")
    features, labels = [], []
    for class_id in range(len(CLASS_LABELS)):
        for k in range(CLIPS_PER_CLASS):
            clip = synth_clip(class_id, duration_s=2.0, sr=22050,
                              seed=class_id * 100 + k)
            features.append(extract_features(clip))
            labels.append(class_id)
    data = LabeledDataset(np.array(features), np.array(labels), split=0.7)

    model, report = train(init_model(seed=0), data, epochs=EPOCHS, lr=0.1, seed=0)
    summary = report.summary()
    print(f"trained {EPOCHS} epochs: final loss {summary['final_loss']:.4f}, "
          f"train acc {summary['train_accuracy']:.3f}, "
          f"held-out acc {summary['test_accuracy']:.3f} "
          f"({summary['n_train']}/{summary['n_test']} split)")

    accuracy, confusion = evaluate(model, data)
    misses = [(CLASS_LABELS[t], CLASS_LABELS[p], int(confusion[t, p]))
              for t in range(len(CLASS_LABELS))
              for p in range(len(CLASS_LABELS))
              if t != p and confusion[t, p]]
    print(f"whole-corpus accuracy {accuracy:.3f}; "
          f"confusions: {misses if misses else 'none'}")

    path = Path(tempfile.mkdtemp()) / "model.bin"
    save_model(model, path)
    reloaded = load_model(path)
    same = all(np.array_equal(a, b)
               for a, b in zip(model.weights, reloaded.weights))
    print(f"saved {path.stat().st_size} bytes to {path}; "
          f"weights identical after reload: {same}")


if __name__ == "__main__":
    main()
