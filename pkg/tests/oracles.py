"""Independent reference implementations used to verify the fast paths.

Everything here is written for clarity, not speed: per-pixel loops, explicit
dense matrices, plain matrix inverses. These stay independent of the package
code they check.
"""

import math

import numpy as np


def naive_hog(img, cell=8, block=2, bins=9, eps=1e-6):
    """Per-pixel HOG: gradients, magnitude and orientation computed pixel by
    pixel, bilinear votes into per-cell histograms, per-block L2 norm."""
    img = np.asarray(img, dtype=np.float64)
    height, width = img.shape
    cells_y, cells_x = height // cell, width // cell
    hist = np.zeros((cells_y, cells_x, bins))
    bin_width = 180.0 / bins
    for y in range(height):
        for x in range(width):
            left = img[y, x - 1 if x > 0 else 0]
            right = img[y, x + 1 if x < width - 1 else width - 1]
            up = img[y - 1 if y > 0 else 0, x]
            down = img[y + 1 if y < height - 1 else height - 1, x]
            dx = right - left
            dy = down - up
            mag = math.hypot(dx, dy)
            theta = math.degrees(math.atan2(dy, dx)) % 180.0
            pos = theta / bin_width
            low = int(math.floor(pos))
            frac = pos - low
            low %= bins
            high = (low + 1) % bins
            cy, cx = y // cell, x // cell
            hist[cy, cx, low] += mag * (1.0 - frac)
            hist[cy, cx, high] += mag * frac
    out = []
    for by in range(cells_y - block + 1):
        for bx in range(cells_x - block + 1):
            vec = []
            for iy in range(block):
                for ix in range(block):
                    vec.extend(hist[by + iy, bx + ix])
            vec = np.array(vec)
            out.append(vec / math.sqrt(float(vec @ vec) + eps ** 2))
    return np.concatenate(out)


def dense_gaussian_blur(img, sigma):
    """Dense 2-D convolution with an explicit truncated Gaussian kernel and
    replicate padding."""
    img = np.asarray(img, dtype=np.float64)
    radius = math.ceil(3 * sigma)
    offsets = np.arange(-radius, radius + 1)
    k1 = np.exp(-0.5 * (offsets / sigma) ** 2)
    k1 /= k1.sum()
    kernel = np.outer(k1, k1)
    padded = np.pad(img, radius, mode="edge")
    out = np.zeros_like(img)
    for dy in range(2 * radius + 1):
        for dx in range(2 * radius + 1):
            out += kernel[dy, dx] * padded[dy:dy + img.shape[0],
                                           dx:dx + img.shape[1]]
    return out


def dense_ring_states(alpha, beta, mask, inputs, strict_ring=False):
    """Augmented dense simulator: the ring update as x(n+1) = sin(W z(n) +
    W_in u(n)) on the stacked state z(n) = (x(n), x(n-1)) with an explicit
    shift matrix W."""
    mask = np.asarray(mask, dtype=np.float64)
    inputs = np.asarray(inputs, dtype=np.float64)
    n = mask.shape[0]
    W = np.zeros((n, 2 * n))
    W[0, n - 1 if strict_ring else 2 * n - 1] = alpha
    for i in range(1, n):
        W[i, i - 1] = alpha
    z = np.zeros(2 * n)
    states = np.empty((len(inputs), n))
    for t, u in enumerate(inputs):
        x_new = np.sin(W @ z + beta * (mask @ u))
        z = np.concatenate([x_new, z[:n]])
        states[t] = x_new
    return states


def scalar_ring_step(x_curr, x_prev, u, alpha, beta, mask, strict_ring=False):
    """Direct per-node evaluation of the ring update equations."""
    n = len(x_curr)
    out = np.empty(n)
    for i in range(n):
        inj = beta * float(np.dot(mask[i], u))
        if i == 0:
            neighbor = x_curr[n - 1] if strict_ring else x_prev[n - 1]
        else:
            neighbor = x_curr[i - 1]
        out[i] = math.sin(alpha * neighbor + inj)
    return out


def ridge_normal_equations(X, Y, lam):
    """Explicit inverse of the regularized normal equations."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    dim = X.shape[1]
    return (np.linalg.inv(X.T @ X + lam * np.eye(dim)) @ X.T @ Y).T


def pca_by_eigh(values):
    """Covariance eigendecomposition via numpy, eigenvalues descending."""
    values = np.asarray(values, dtype=np.float64)
    mean = values.mean(axis=0)
    centered = values - mean
    cov = centered.T @ centered / (len(values) - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    return mean, eigvals[order], eigvecs[:, order].T


def gp_posterior_by_inverse(X_train, y_centered, X_test, length_scales,
                            signal_var, noise_var):
    """GP posterior through a plain matrix inverse (no Cholesky).

    ``y_centered`` must already be on the kernel's scale; returns the mean
    (same scale) and variance of the latent function.
    """
    X_train = np.atleast_2d(X_train)
    X_test = np.atleast_2d(X_test)
    ls = np.asarray(length_scales, dtype=np.float64)

    def k(a, b):
        d = (a[:, None, :] - b[None, :, :]) / ls
        return signal_var * np.exp(-0.5 * (d ** 2).sum(-1))

    K = k(X_train, X_train) + noise_var * np.eye(len(X_train))
    K_inv = np.linalg.inv(K)
    K_star = k(X_test, X_train)
    mean = K_star @ K_inv @ y_centered
    var = signal_var - np.einsum("mn,nk,mk->m", K_star, K_inv, K_star)
    return mean, var


def ei_monte_carlo(mu, sigma, best, n_samples=1_000_000, seed=0):
    """Monte-Carlo E[max(Y - best, 0)], Y ~ N(mu, sigma^2); returns the
    estimate and its standard error."""
    rng = np.random.Generator(np.random.Philox(seed))
    gains = np.maximum(rng.normal(mu, sigma, n_samples) - best, 0.0)
    return float(gains.mean()), float(gains.std() / math.sqrt(n_samples))
