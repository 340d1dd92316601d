# -*- coding:utf-8 -*-
"""
Named-tensor container.

    magic    4 bytes  b'SOC1'
    version  uint16
    count    uint32
    entries  count x (uint16 name length, utf-8 name, uint8 rank,
                      rank x uint64 dims, float64 payload)
    crc32    uint32 over every preceding byte

All integers and floats are little-endian.
"""

from utils.errors import CheckpointError
import numpy as np
import struct, zlib, os, logging

MAGIC = b'SOC1'
VERSION = 1


def dumps(tensors) -> bytes:
    chunks = [MAGIC, struct.pack('<HI', VERSION, len(tensors))]
    for name, value in tensors.items():
        encoded = name.encode('utf-8')
        value = np.asarray(value)
        chunks.append(struct.pack('<H', len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack('<B', value.ndim))
        chunks.append(struct.pack('<{}Q'.format(value.ndim), *value.shape))
        chunks.append(np.ascontiguousarray(value, dtype='<f8').tobytes())

    body = b''.join(chunks)
    return body + struct.pack('<I', zlib.crc32(body) & 0xffffffff)


def loads(blob: bytes):
    if len(blob) < len(MAGIC) + 10 or blob[:4] != MAGIC:
        raise CheckpointError('Not a checkpoint file (bad magic)')

    body, (crc,) = blob[:-4], struct.unpack('<I', blob[-4:])
    if zlib.crc32(body) & 0xffffffff != crc:
        raise CheckpointError('Checkpoint CRC mismatch, refusing to load')

    version, count = struct.unpack_from('<HI', body, 4)
    if version != VERSION:
        raise CheckpointError('Unsupported checkpoint version {}'.format(version))

    tensors = {}
    offset = 10
    try:
        for _ in range(count):
            (length,) = struct.unpack_from('<H', body, offset)
            offset += 2
            name = body[offset:offset + length].decode('utf-8')
            offset += length
            (rank,) = struct.unpack_from('<B', body, offset)
            offset += 1
            shape = struct.unpack_from('<{}Q'.format(rank), body, offset)
            offset += 8 * rank
            size = int(np.prod(shape, dtype=np.int64))
            if offset + 8 * size > len(body):
                raise CheckpointError('Checkpoint truncated in tensor {}'.format(name))
            if size:
                tensors[name] = np.frombuffer(body, dtype='<f8', count=size, offset=offset).reshape(shape).astype(np.float64)
            else:
                tensors[name] = np.zeros(shape)
            offset += 8 * size
    except (struct.error, UnicodeDecodeError) as e:
        raise CheckpointError('Malformed checkpoint: {}'.format(e))

    if offset != len(body):
        raise CheckpointError('Checkpoint has {} trailing bytes'.format(len(body) - offset))
    return tensors


def save(path, tensors):
    tmp = '{}.tmp'.format(path)
    with open(tmp, 'wb') as f:
        f.write(dumps(tensors))
    os.replace(tmp, path)
    logging.getLogger('socnn').info('Saved checkpoint: {} ({} tensors)'.format(path, len(tensors)))


def load(path):
    if not os.path.exists(path):
        raise CheckpointError('Checkpoint {} does not exist'.format(path))

    with open(path, 'rb') as f:
        return loads(f.read())
