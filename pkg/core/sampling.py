"""
确定性随机数
每个采样位置由全局种子与盐值派生独立的 Generator，与调用顺序无关
"""

import hashlib
from typing import Optional

import numpy as np

from core.config import get_config


def make_rng(*salt: object, seed: Optional[int] = None) -> np.random.Generator:
    """
    派生确定性随机数生成器

    Args:
        salt: 标识采样位置的任意对象（取 str 后参与哈希）
        seed: 覆盖配置中的种子

    Returns:
        numpy Generator
    """
    base = get_config().kernel.seed if seed is None else seed
    digest = hashlib.sha256(("|".join([str(base)] + [str(s) for s in salt])).encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def unit_directions(rng: np.random.Generator, n: int, count: int) -> np.ndarray:
    """采样 count 个 n 维单位向量"""
    vecs = rng.normal(size=(count, n))
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return vecs / norms
