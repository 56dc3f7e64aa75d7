"""Show the frame codec: encoding, sizes, fragmentation, and error handling."""
import numpy as np

from edgesound.audio import AudioClip
from edgesound.protocol import (
    Frame,
    FrameDecoder,
    MsgType,
    ProtocolError,
    encode_ack_payload,
    encode_audio_payload,
    encode_features_payload,
    encode_frame,
    encode_result_payload,
)


def main() -> None:
    tone = AudioClip(0.5 * np.sin(np.linspace(0.0, 40.0, 16000)), 16000)
    rng = np.random.default_rng(0)
    frames = [
        Frame(MsgType.AUDIO, 1, 1_000, encode_audio_payload(tone)),
        Frame(MsgType.FEATURES, 2, 2_000,
              encode_features_payload(rng.uniform(-1.0, 1.0, 193))),
        Frame(MsgType.RESULT, 3, 3_000, encode_result_payload(8, 0.93, 77)),
        Frame(MsgType.ACK, 0, 4_000, encode_ack_payload(0, 77)),
        Frame(MsgType.CLASSIFICATION, 0, 5_000,
              encode_result_payload(8, 0.93, 2_000)),
    ]
    for frame in frames:
        encoded = encode_frame(frame)
        print(f"{MsgType(frame.msg_type).name:14s} {frame.wire_size:7d} bytes; "
              f"header+start: {encoded[:24].hex()}")

    blob = b"".join(encode_frame(f) for f in frames)
    decoder = FrameDecoder()
    recovered = []
    for step in range(0, len(blob), 7):  # arbitrary 7-byte fragments
        recovered.extend(decoder.feed(blob[step:step + 7]))
    print(f"\nfed {len(blob)} bytes in 7-byte fragments -> "
          f"{len(recovered)} frames, intact: {recovered == frames}")

    try:
        FrameDecoder().feed(b"HTTP/1.1 GET /")
    except ProtocolError as exc:
        print(f"garbage stream rejected: {exc}")


if __name__ == "__main__":
    main()
