from enum import IntEnum

from hiermarket import _kernels as K


class TraderRole(IntEnum):
    OPTIMIST = K.OPTIMIST
    PESSIMIST = K.PESSIMIST
    FUNDAMENTALIST = K.FUNDAMENTALIST
