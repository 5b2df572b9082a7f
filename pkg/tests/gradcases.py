"""Differentiable-op cases shared by the unit and acceptance gradient checks."""
import numpy as np

from slopecrack import functional as F
from slopecrack.tensor import Tensor, concat, relu


def _r(rng, *shape, grad=True):
    return Tensor(rng.standard_normal(shape), requires_grad=grad)


GRAD_CASES = {
    "conv2d": lambda r: (lambda x, w, b: F.conv2d(x, w, b, 2, 1), [_r(r, 2, 2, 5, 5), _r(r, 3, 2, 3, 3), _r(r, 3)]),
    "conv2d_rect": lambda r: (lambda x, w: F.conv2d(x, w, None, 1, (0, 1)), [_r(r, 1, 2, 4, 4), _r(r, 2, 2, 1, 3)]),
    "depthwise": lambda r: (lambda x, w, b: F.depthwise_conv2d(x, w, b, 2, 1), [_r(r, 2, 3, 5, 5), _r(r, 3, 1, 3, 3), _r(r, 3)]),
    "maxpool": lambda r: (lambda x: F.pool2d(x, "max", 3, 2), [_r(r, 2, 2, 7, 7)]),
    "maxpool_pad": lambda r: (lambda x: F.pool2d(x, "max", 3, 2, 1), [_r(r, 1, 2, 6, 6)]),
    "avgpool": lambda r: (lambda x: F.pool2d(x, "avg", 3, 1, 1), [_r(r, 2, 2, 5, 5)]),
    "dense": lambda r: (F.dense, [_r(r, 4, 5), _r(r, 5, 3), _r(r, 3)]),
    "dense_3d": lambda r: (F.dense, [_r(r, 2, 3, 5), _r(r, 5, 4), _r(r, 4)]),
    "relu": lambda r: (relu, [_r(r, 3, 7)]),
    "batchnorm_train": lambda r: (lambda x, g, b: F.batchnorm2d(x, g, b, F.RunningStats.fresh(3), "train"),
                                  [_r(r, 3, 3, 3, 3), _r(r, 3), _r(r, 3)]),
    "batchnorm_eval": lambda r: (lambda x, g, b: F.batchnorm2d(x, g, b, F.RunningStats(np.full(3, 0.2), np.full(3, 1.5)), "eval"),
                                 [_r(r, 2, 3, 3, 3), _r(r, 3), _r(r, 3)]),
    "layernorm": lambda r: (F.layernorm, [_r(r, 2, 3, 6), _r(r, 6), _r(r, 6)]),
    "softmax": lambda r: (F.softmax, [_r(r, 4, 5)]),
    "cross_entropy": lambda r: (lambda z: F.cross_entropy_loss(z, [0, 1, 1, 0, 1]), [_r(r, 5, 2)]),
    "attention": lambda r: (lambda x, *p: F.multihead_attention(x, *p, heads=2),
                            [_r(r, 2, 3, 4)] + [_r(r, *s) for s in [(4, 4), (4,)] * 4]),
    "global_avg_pool": lambda r: (F.global_avg_pool, [_r(r, 2, 3, 4, 4)]),
    "add_mul_broadcast": lambda r: (lambda a, b: a * b + a - b, [_r(r, 3, 4), _r(r, 4)]),
    "matmul_batched": lambda r: (lambda a, b: a @ b, [_r(r, 2, 3, 4), _r(r, 2, 4, 5)]),
    "reshape_transpose_mean": lambda r: (lambda a: a.reshape(3, 4).transpose(1, 0).mean(axis=1), [_r(r, 2, 6)]),
    "sum_axis": lambda r: (lambda a: a.sum(axis=0), [_r(r, 3, 5)]),
    "concat_index": lambda r: (lambda a, b: concat([a, b], axis=1)[:, 1:4], [_r(r, 2, 3), _r(r, 2, 2)]),
}
