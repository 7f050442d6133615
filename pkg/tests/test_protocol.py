import io
import socket
import threading

import numpy as np
import pytest

from finercam import protocol, tensor_store
from finercam.backend import ExternalBackend, ToyBackend
from finercam.rng import StreamRng


def test_message_framing_roundtrip():
    buf = io.BytesIO()
    payloads = [b"abc", b"", b"\x00\x01"]
    protocol.write_message(buf, {"type": "forward"}, payloads)
    buf.seek(0)
    obj, blobs = protocol.read_message(buf)
    assert obj["type"] == "forward"
    assert obj["payloads"] == [3, 0, 2]
    assert blobs == payloads


def test_read_message_eof_and_truncation():
    assert protocol.read_message(io.BytesIO(b"")) is None
    with pytest.raises(protocol.ProtocolError):
        protocol.read_message(io.BytesIO(b'{"type": "x", "payloads": [5]}\nab'))
    with pytest.raises(protocol.ProtocolError):
        protocol.read_message(io.BytesIO(b"not json\n"))


@pytest.fixture
def served_toy():
    """ToyBackend served over a socket pair; yields a connected client."""
    backend = ToyBackend(seed=3)
    server_sock, client_sock = socket.socketpair()
    thread = threading.Thread(
        target=protocol.serve_stream,
        args=(backend, server_sock.makefile("rb"), server_sock.makefile("wb")),
        daemon=True,
    )
    thread.start()
    client = ExternalBackend(protocol.ProtocolClient(client_sock.makefile("rb"), client_sock.makefile("wb")))
    yield backend, client, client_sock
    client_sock.close()
    server_sock.close()


def test_hello_descriptor(served_toy):
    backend, client, _ = served_toy
    assert client.descriptor() == backend.descriptor()
    assert client.num_classes == backend.num_classes


def test_forward_transport_byte_exact(served_toy):
    backend, client, _ = served_toy
    image = StreamRng(5).uniform((64, 64, 3)).astype(np.float32)
    local_stack, local_logits = backend.forward(image)
    remote_stack, remote_logits = client.forward(image)
    assert remote_stack.maps.tobytes() == local_stack.maps.tobytes()
    np.testing.assert_array_equal(
        remote_logits, np.asarray(local_logits, dtype=np.float32).astype(np.float64)
    )


def test_masked_forward_identity(served_toy):
    backend, client, _ = served_toy
    image = StreamRng(6).uniform((64, 64, 3)).astype(np.float32)
    ones = np.ones((64, 64), dtype=np.float32)
    remote = client.masked_forward(image, ones)
    local = backend.masked_forward(image, ones)
    np.testing.assert_allclose(remote, local, atol=1e-6)


def test_error_reply_on_malformed_message(served_toy):
    _, client, _ = served_toy
    with pytest.raises(protocol.RemoteBackendError) as err:
        client._client.request({"type": "dance"})
    assert err.value.code == protocol.ERR_BAD_REQUEST


def test_error_reply_on_bad_tensor(served_toy):
    _, client, _ = served_toy
    with pytest.raises(protocol.RemoteBackendError) as err:
        client._client.request({"type": "forward"}, [b"FCT1garbage"])
    assert err.value.code in (protocol.ERR_BAD_TENSOR, protocol.ERR_BAD_REQUEST)


def test_error_reply_on_wrong_payload_count(served_toy):
    _, client, _ = served_toy
    blob = tensor_store.tensor_to_bytes(np.zeros((64, 64, 3), dtype=np.float32))
    with pytest.raises(protocol.RemoteBackendError):
        client._client.request({"type": "masked_forward"}, [blob])


def test_uint8_image_payload(served_toy):
    backend, client, _ = served_toy
    pixels = np.floor(StreamRng(7).uniform((64, 64, 3)) * 255 + 0.5).astype(np.uint8)
    blob = tensor_store.tensor_to_bytes(pixels)
    reply, payloads = client._client.request({"type": "forward"}, [blob])
    maps = tensor_store.tensor_from_bytes(payloads[0])
    local_stack, _ = backend.forward(pixels)
    assert maps.tobytes() == local_stack.maps.tobytes()


def test_tcp_transport():
    backend = ToyBackend(seed=9, input_shape=(16, 16, 3), channels=4, kernel_size=4, stride=4, num_classes=3)
    ready = threading.Event()
    addr = {}

    def on_ready(sockname):
        addr["port"] = sockname[1]
        ready.set()

    thread = threading.Thread(
        target=protocol.serve_tcp, args=(backend,), kwargs={"port": 0, "ready": on_ready, "once": True},
        daemon=True,
    )
    thread.start()
    assert ready.wait(5)
    client = ExternalBackend.connect_tcp("127.0.0.1", addr["port"])
    image = StreamRng(8).uniform((16, 16, 3)).astype(np.float32)
    stack, logits = client.forward(image)
    local_stack, local_logits = backend.forward(image)
    assert stack.maps.tobytes() == local_stack.maps.tobytes()
    client.close()
    thread.join(timeout=5)
