"""Parameterized layers shared by both streams."""

from thct_net.nn.base import Module
from thct_net.nn.conv import Conv2DLayer, Conv3DLayer, conv2d_forward, conv3d_forward
from thct_net.nn.linear import LinearLayer, linear_forward
from thct_net.nn.norm import BatchNormLayer, batchnorm_forward
from thct_net.nn.pooling import AvgPool2D, gap

__all__ = [
    "Module",
    "Conv2DLayer",
    "Conv3DLayer",
    "conv2d_forward",
    "conv3d_forward",
    "LinearLayer",
    "linear_forward",
    "BatchNormLayer",
    "batchnorm_forward",
    "AvgPool2D",
    "gap",
]
