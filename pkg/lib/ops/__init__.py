from .elementwise import add, sub, mul, div, neg, leaky_relu
from .linalg import matmul
from .shape import reshape, transpose, expand, concat, stack, take
from .reduce import sum, mean, max_pool_rows
from .conv import conv2d, conv_output_size, global_avg_pool
from .norm import batch_norm
from .softmax import softmax, masked_softmax, softmax_cross_entropy
