"""Run one device through all three compute placements against a live server."""
from edgesound.bench import quick_model
from edgesound.device import Configuration, DeviceSession
from edgesound.server import SoundServer
from edgesound.synth import synth_clip

CONFIG_NOTES = {
    "A": "classify on device, upload the verdict",
    "B": "upload raw audio, classify on server",
    "C": "extract features on device, classify on server",
}


def main() -> None:
    print("training a small model ...")
    model = quick_model(clips_per_class=2, epochs=100, seed=0)
    clip = synth_clip(class_id=3, duration_s=2.0, sr=16000, seed=5)  # dog_bark

    with SoundServer(port=0, model=model) as server:
        host, port = server.address
        print(f"server listening on {host}:{port}\n")
        with DeviceSession(server.address, device_id=1) as device:
            for config in Configuration:
                label = config.value
                report = device.run(config, clip,
                                    model=model if label == "A" else None)
                print(f"config {label}: {CONFIG_NOTES[label]}")
                print(f"  verdict {report.label!r} "
                      f"(confidence {report.confidence:.2f}), "
                      f"sent {report.bytes_sent} bytes, "
                      f"extract {report.extract_s * 1e3:.1f} ms, "
                      f"classify {report.classify_s * 1e3:.1f} ms, "
                      f"round trip {report.latency_ms:.1f} ms")

        stored = [(r.config, r.label) for r in server.store.records]
        print(f"\nserver stored {len(stored)} results: {stored}")


if __name__ == "__main__":
    main()
