"""
纤维分解 ω = ω′ + ω″∧dt
t 为最后一个坐标 x_n；递增指标中 n 总在末尾，因此 ω″ 的系数直接读出，无需换号
"""

from dataclasses import dataclass

from forms.zoned_form import ZonedForm


@dataclass(frozen=True)
class FiberDecomposition:
    """ω′ 不含 dt，ω″ 为 dt 的系数（k-1 次），t_index = n"""
    prime: ZonedForm
    dprime: ZonedForm
    t_index: int

    def reassemble(self) -> ZonedForm:
        """ω′ + ω″∧dt"""
        return self.prime + wedge_dt(self.dprime)


def fiber_decompose(omega: ZonedForm) -> FiberDecomposition:
    """
    按多重指标是否含 t 拆分系数

    例：a dx1 + b dx1∧dt -> ω′ = a dx1, ω″ = b dx1。
    """
    n, k = omega.n, omega.k
    prime = {}
    dprime = {}
    for J, a in omega.coeffs:
        if J and J[-1] == n:
            dprime[J[:-1]] = a
        else:
            prime[J] = a
    w1 = ZonedForm.build(n, k, prime, omega.region, omega.q, omega.zone)
    w2 = ZonedForm.build(n, max(k - 1, 0), dprime, omega.region, omega.q, omega.zone)
    return FiberDecomposition(w1, w2, n)


def wedge_dt(omega: ZonedForm) -> ZonedForm:
    """ω∧dt（ω 不含 dt 分量）"""
    n = omega.n
    table = {}
    for J, a in omega.coeffs:
        if n in J:
            continue
        table[J + (n,)] = a
    return ZonedForm.build(n, omega.k + 1, table, omega.region, omega.q, omega.zone)
