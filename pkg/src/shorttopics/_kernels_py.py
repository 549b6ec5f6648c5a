"""Pure-Python/numpy reference kernels.

Same signatures and in-place semantics as the compiled ``_kernels``
extension; used when the extension is unavailable or disabled.
"""

import numpy as np

from .special import digamma

BACKEND = "python"


def dmm_log_weights(m, n_kw, n_k, words, counts, doc_len, alpha, beta, V):
    """Unnormalized log conditional of one document over topics.

    Counters must already exclude the document.
    """
    vbeta = V * beta
    lp = np.log(m + alpha)
    for i in range(doc_len):
        lp -= np.log(n_k + vbeta + i)
    for w, c in zip(words, counts):
        col = n_kw[:, w]
        for j in range(c):
            lp += np.log(col + beta + j)
    return lp


def gibbs_sweep(z, m, n_kw, n_k, indptr, words, counts, doc_len,
                alpha, beta, uniforms):
    """Relabel every document once; counters are updated in place.

    ``uniforms[d]`` in [0, 1) drives the inverse-CDF draw for document d.
    """
    V = n_kw.shape[1]
    for d in range(z.shape[0]):
        lo, hi = indptr[d], indptr[d + 1]
        ws, cs = words[lo:hi], counts[lo:hi]
        k = z[d]
        m[k] -= 1
        n_k[k] -= doc_len[d]
        n_kw[k, ws] -= cs
        lp = dmm_log_weights(m, n_kw, n_k, ws, cs, doc_len[d], alpha, beta, V)
        p = np.exp(lp - lp.max())
        cdf = np.cumsum(p)
        k = int(np.searchsorted(cdf, uniforms[d] * cdf[-1], side="right"))
        if k >= cdf.shape[0]:
            k = cdf.shape[0] - 1
        z[d] = k
        m[k] += 1
        n_k[k] += doc_len[d]
        n_kw[k, ws] += cs


def lda_e_step(indptr, words, counts, exp_elog_beta, alpha, tol, max_inner,
               gamma, sstats):
    """Fit per-document variational Dirichlets for a batch.

    ``gamma`` (D x K) holds the starting values and is overwritten;
    ``sstats`` (K x V) accumulates sum_d c_dw * phi_dwk. Returns the
    number of documents that hit ``max_inner`` without converging.
    """
    unconverged = 0
    for d in range(gamma.shape[0]):
        lo, hi = indptr[d], indptr[d + 1]
        ws, cs = words[lo:hi], counts[lo:hi]
        eb = exp_elog_beta[:, ws]
        g = gamma[d]
        converged = False
        for _ in range(max_inner):
            et = np.exp(digamma(g))
            norm = et @ eb + 1e-100
            new_g = alpha + et * ((cs / norm) @ eb.T)
            change = np.mean(np.abs(new_g - g))
            g = new_g
            if change < tol:
                converged = True
                break
        if not converged:
            unconverged += 1
        et = np.exp(digamma(g))
        norm = et @ eb + 1e-100
        gamma[d] = g
        sstats[:, ws] += np.outer(et, cs / norm) * eb
    return unconverged
