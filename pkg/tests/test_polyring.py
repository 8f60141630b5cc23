"""
Tests for Polynomial Ring Service
"""

import numpy as np
import pytest

from services.polyring import (
    U64, Domain, Modulus, RnsBase, RnsPoly, RingConfigurationError, RingUsageError,
    crt_combine, deserialize_poly, generate_ntt_primes, mul_pow2, naive_negacyclic_product,
    negacyclic_shift, ntt_transform, poly_add, poly_from_integers, poly_mul, poly_neg,
    poly_pointwise, poly_scale, poly_sub, random_poly, rns_decompose, rns_reconstruct,
    serialize_poly, to_domain, zero_poly,
)


@pytest.fixture
def base17():
    """Single modulus 17 at n = 8 (17 = 1 mod 16)"""
    return RnsBase([17], 8)


@pytest.fixture(scope="module")
def base1024():
    """Two 62-bit NTT primes at n = 1024"""
    return RnsBase(generate_ntt_primes(1024, 2), 1024)


def monomial(base, power, coefficient=1):
    values = [0] * base.n
    values[power] = coefficient
    return poly_from_integers(values, base)


class TestModulus:
    """Test cases for Modulus"""

    def test_rejects_composite(self):
        """Test that a composite modulus is rejected"""
        with pytest.raises(RingConfigurationError):
            Modulus(15, 8)

    def test_rejects_oversized(self):
        """Test that moduli above 62 bits are rejected"""
        with pytest.raises(RingConfigurationError):
            Modulus((1 << 63) + 29, 8)

    def test_unfriendly_modulus_fails_at_table_build(self):
        """Test that q != 1 mod 2n fails when tables are built, not at construction"""
        modulus = Modulus(19, 8)
        assert not modulus.ntt_friendly
        with pytest.raises(RingConfigurationError):
            modulus.ensure_tables()

    def test_root_properties(self):
        """Test root^n = -1 and root^(2n) = 1"""
        modulus = Modulus(17, 8)
        modulus.ensure_tables()
        assert pow(modulus.root, 8, 17) == 16
        assert pow(modulus.root, 16, 17) == 1

    def test_barrett_matches_bigint(self, rng):
        """Test Barrett multiplication against Python integers for a 62-bit prime"""
        q = generate_ntt_primes(16, 1)[0]
        modulus = Modulus(q, 16)
        a = rng.integers(0, q, size=1000, dtype=U64)
        b = rng.integers(0, q, size=1000, dtype=U64)
        expected = [int(x) * int(y) % q for x, y in zip(a, b)]
        assert modulus.mul(a, b).tolist() == expected

    def test_shoup_matches_bigint(self, rng):
        """Test Shoup multiplication by a fixed operand"""
        q = generate_ntt_primes(16, 1)[0]
        modulus = Modulus(q, 16)
        w = int(rng.integers(0, q))
        a = rng.integers(0, q, size=500, dtype=U64)
        result = modulus.mul_shoup(a, w, (w << 64) // q)
        assert result.tolist() == [int(x) * w % q for x in a]


class TestNtt:
    """Test cases for the negacyclic transform"""

    def test_roundtrip_small(self, base17, rng):
        """Test inverse(forward(p)) == p at n = 8, q = 17"""
        p = random_poly(base17, rng)
        assert ntt_transform(ntt_transform(p), "inverse").equals(p)

    def test_zero_polynomial(self, base17):
        """Test that the transform of zero is zero"""
        evaluated = ntt_transform(zero_poly(base17))
        assert evaluated.domain is Domain.EVALUATION
        assert not evaluated.residues.any()

    def test_constant_one(self, base17):
        """Test that the constant 1 evaluates to 1 at every root"""
        evaluated = ntt_transform(monomial(base17, 0))
        assert evaluated.residues.tolist() == [[1] * 8]

    def test_domain_checks(self, base17):
        """Test that transforms enforce the domain flag"""
        p = zero_poly(base17)
        with pytest.raises(RingUsageError):
            ntt_transform(p, "inverse")
        with pytest.raises(RingUsageError):
            ntt_transform(ntt_transform(p))

    def test_linearity(self, base1024, rng):
        """Test forward(a + b) == forward(a) + forward(b)"""
        a, b = random_poly(base1024, rng), random_poly(base1024, rng)
        left = ntt_transform(poly_add(a, b))
        right = poly_add(ntt_transform(a), ntt_transform(b))
        assert left.equals(right)

    def test_roundtrip_1024(self, base1024, rng):
        """Test the roundtrip at n = 1024 with 62-bit primes"""
        p = random_poly(base1024, rng)
        assert to_domain(to_domain(p, Domain.EVALUATION), Domain.COEFFICIENT).equals(p)


class TestPolyMul:
    """Test cases for ring multiplication"""

    def test_negacyclic_wraparound(self, base17):
        """Test x^(n-1) * x == -1"""
        product = poly_mul(monomial(base17, 7), monomial(base17, 1))
        assert product.residues.tolist() == [[16, 0, 0, 0, 0, 0, 0, 0]]

    def test_binomial_square(self, base17):
        """Test (1 + x)^2 == 1 + 2x + x^2"""
        one_plus_x = poly_from_integers([1, 1, 0, 0, 0, 0, 0, 0], base17)
        product = poly_mul(one_plus_x, one_plus_x)
        assert product.residues.tolist() == [[1, 2, 1, 0, 0, 0, 0, 0]]

    @pytest.mark.parametrize("n", [16, 1024])
    def test_ntt_matches_naive(self, n, rng):
        """Test NTT product against the schoolbook oracle"""
        base = RnsBase(generate_ntt_primes(n, 2), n)
        pairs = 20 if n == 16 else 2
        for _ in range(pairs):
            a, b = random_poly(base, rng), random_poly(base, rng)
            assert poly_mul(a, b).equals(poly_mul(a, b, method="naive"))

    @pytest.mark.slow
    @pytest.mark.parametrize("n", [16, 1024])
    def test_ntt_matches_naive_200_pairs(self, n):
        """Test NTT product against the schoolbook oracle on 200 random pairs"""
        rng = np.random.default_rng(n)
        base = RnsBase(generate_ntt_primes(n, 1), n)
        for _ in range(200):
            a, b = random_poly(base, rng), random_poly(base, rng)
            assert poly_mul(a, b).equals(poly_mul(a, b, method="naive"))

    def test_mixed_domains_accepted(self, base17, rng):
        """Test that poly_mul accepts operands in either domain"""
        a, b = random_poly(base17, rng), random_poly(base17, rng)
        assert poly_mul(ntt_transform(a), b).equals(poly_mul(a, b))

    def test_mismatched_bases(self, base17):
        """Test that different bases raise a usage error"""
        other = RnsBase([97], 8)
        with pytest.raises(RingUsageError):
            poly_mul(zero_poly(base17), zero_poly(other))

    def test_naive_oracle_python_ints(self):
        """Test the schoolbook oracle on a hand-computed case"""
        assert naive_negacyclic_product([0, 1], [0, 1], 17) == [16, 0]


class TestPolyAdd:
    """Test cases for addition and negation"""

    def test_additive_identity(self, base1024, rng):
        """Test a + 0 == a"""
        a = random_poly(base1024, rng)
        assert poly_add(a, zero_poly(base1024)).equals(a)

    def test_additive_inverse(self, base1024, rng):
        """Test a + (-a) == 0"""
        a = random_poly(base1024, rng)
        assert not poly_add(a, poly_neg(a)).residues.any()

    def test_add_sub_roundtrip(self, base1024, rng):
        """Test (a + b) - b == a"""
        a, b = random_poly(base1024, rng), random_poly(base1024, rng)
        assert poly_sub(poly_add(a, b), b).equals(a)

    def test_domain_mismatch(self, base17):
        """Test that mixing domains raises a usage error"""
        p = zero_poly(base17)
        with pytest.raises(RingUsageError):
            poly_add(p, ntt_transform(p))

    def test_results_stay_reduced(self, base1024, rng):
        """Test every stored coefficient stays below its modulus"""
        a, b = random_poly(base1024, rng), random_poly(base1024, rng)
        for result in (poly_add(a, b), poly_sub(a, b), poly_neg(a), poly_mul(a, b), poly_scale(a, -12345)):
            assert np.all(result.residues < base1024.column)

    def test_pointwise_is_ring_product_in_evaluation_domain(self, base17, rng):
        """Test pointwise product of transforms equals the ring product"""
        a, b = random_poly(base17, rng), random_poly(base17, rng)
        product = ntt_transform(poly_pointwise(ntt_transform(a), ntt_transform(b)), "inverse")
        assert product.equals(poly_mul(a, b, method="naive"))

    def test_residue_shape_validated(self, base17):
        """Test that a malformed residue matrix is rejected"""
        with pytest.raises(RingUsageError):
            RnsPoly(base17, np.zeros((2, 8), dtype=U64))


class TestShifts:
    """Test cases for monomial shifts and doubling chains"""

    def test_shift_matches_monomial_product(self, base1024, rng):
        """Test negacyclic_shift(a, j) == a * x^j"""
        a = random_poly(base1024, rng)
        for power in (0, 1, 17, 1023, 1024, 1500):
            expected = poly_mul(a, monomial(base1024, power % 1024, -1 if (power // 1024) % 2 else 1))
            assert negacyclic_shift(a, power).equals(expected)

    def test_mul_pow2_matches_scale(self, base1024, rng):
        """Test k modular doublings == multiplication by 2^k"""
        a = random_poly(base1024, rng)
        for k in (0, 1, 20, 70):
            assert mul_pow2(a, k).equals(poly_scale(a, 1 << k))

    def test_negative_doubling_chain(self, base17):
        """Test that a negative chain length is rejected"""
        with pytest.raises(RingUsageError):
            mul_pow2(zero_poly(base17), -1)


class TestCrt:
    """Test cases for RNS decomposition and reconstruction"""

    def test_small_crt(self):
        """Test residues (1 mod 3, 0 mod 5) -> 10"""
        assert crt_combine([1, 0], [3, 5]) == 10

    def test_zero_residues(self, base1024):
        """Test all-zero residues reconstruct to 0"""
        assert rns_reconstruct([0, 0], base1024) == 0

    def test_roundtrip_200_bit(self, rng):
        """Test decompose/reconstruct of random 200-bit integers under four moduli"""
        base = RnsBase(generate_ntt_primes(16, 4), 16)
        for _ in range(50):
            z = int.from_bytes(rng.bytes(25), "little")
            assert rns_reconstruct(rns_decompose(z, base), base) == z % base.product

    def test_residue_out_of_range(self, base17):
        """Test that an unreduced residue is rejected"""
        with pytest.raises(RingUsageError):
            rns_reconstruct([17], base17)

    def test_centered_lift(self, base1024):
        """Test that negative coefficients survive a centered lift"""
        values = [-5, 7] + [0] * 1022
        assert poly_from_integers(values, base1024).to_integers()[:2].tolist() == [-5, 7]


class TestPrimes:
    """Test cases for NTT prime generation"""

    def test_primes_are_ntt_friendly(self):
        """Test primes are distinct, below 2^62 and 1 mod 2n"""
        primes = generate_ntt_primes(8192, 4)
        assert len(set(primes)) == 4
        for q in primes:
            assert q < 1 << 62
            assert q.bit_length() == 62
            assert (q - 1) % (2 * 8192) == 0

    def test_exclusion(self):
        """Test excluded values are skipped"""
        first = generate_ntt_primes(16, 1)
        assert generate_ntt_primes(16, 1, exclude=first)[0] < first[0]


class TestSerialization:
    """Test cases for the binary polynomial format"""

    def test_roundtrip(self, base1024, rng):
        """Test serialize then deserialize preserves residues and domain"""
        p = ntt_transform(random_poly(base1024, rng))
        data = serialize_poly(p)
        restored, offset = deserialize_poly(data)
        assert offset == len(data)
        assert restored.equals(p)

    def test_header_layout(self, base17):
        """Test the magic and the little-endian payload length"""
        data = serialize_poly(zero_poly(base17))
        assert data[:4] == b"RNSP"
        assert len(data) == 4 + 2 + 4 + 2 + 1 + 8 + 8 * 8

    def test_truncated(self, base17):
        """Test that truncated data is rejected"""
        data = serialize_poly(zero_poly(base17))
        with pytest.raises(RingUsageError):
            deserialize_poly(data[:-3])

    def test_unreduced_payload(self, base17):
        """Test that an unreduced stored coefficient is rejected"""
        data = bytearray(serialize_poly(zero_poly(base17)))
        data[-8:] = (100).to_bytes(8, "little")
        with pytest.raises(RingUsageError):
            deserialize_poly(bytes(data))


if __name__ == "__main__":
    pytest.main([__file__])
