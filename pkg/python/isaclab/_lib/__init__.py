# Copyright (c) 2020, ISACLAB DEVELOPERS.

from .kernels import fmcw_block, real_embedding
