//! JSON views of the normal-form output.

use serde_json::{json, Value};

use oscnf::forcing::Forcing;
use oscnf::fourier::Coeff;
use oscnf::nf::{NFSeries, NFTerm, NormalFormResult, ProfileSeries};

fn coeff_json(c: &oscnf::coeffexpr::CoeffExpr<f64>) -> Value {
    let terms: Vec<Value> = c
        .terms()
        .iter()
        .map(|(scalar, mono)| {
            let factors: Vec<Value> = mono
                .iter()
                .map(|(sym, pow)| json!({"j": sym.j, "d": sym.d, "pow": pow}))
                .collect();
            json!({"scalar": scalar, "monomial": factors})
        })
        .collect();
    Value::Array(terms)
}

fn profile_json(p: &ProfileSeries<f64>) -> Value {
    let mut entries = Vec::new();
    if !p.a0.is_zero() {
        entries.push(json!({"harmonic": 0, "kind": "mean", "coefficient": coeff_json(&p.a0)}));
    }
    for k in 1..=p.harmonics() {
        let c = p.cos_coeff(k);
        if !c.is_zero() {
            entries.push(json!({"harmonic": k, "kind": "cos", "coefficient": coeff_json(&c)}));
        }
        let s = p.sin_coeff(k);
        if !s.is_zero() {
            entries.push(json!({"harmonic": k, "kind": "sin", "coefficient": coeff_json(&s)}));
        }
    }
    Value::Array(entries)
}

fn term_json(t: &NFTerm<f64>) -> Value {
    json!({"exponent": t.q, "profile": profile_json(&t.profile)})
}

fn series_json(s: &NFSeries<f64>) -> Value {
    let rows: Vec<Value> = s
        .rows()
        .iter()
        .map(|(row, terms)| {
            json!({
                "row": row,
                "terms": terms.iter().map(term_json).collect::<Vec<_>>(),
            })
        })
        .collect();
    Value::Array(rows)
}

pub fn normal_form_json(
    r: &NormalFormResult<f64>,
    f: &Forcing<f64>,
    config_hash: &str,
) -> Value {
    let gen_json = |w: &std::collections::BTreeMap<usize, NFTerm<f64>>| -> Value {
        let rows: Vec<Value> = w
            .iter()
            .map(|(row, t)| json!({"row": row, "term": term_json(t)}))
            .collect();
        Value::Array(rows)
    };
    let rem_json = |rows: &[Vec<NFTerm<f64>>]| -> Value {
        let out: Vec<Value> = rows
            .iter()
            .enumerate()
            .filter(|(_, cell)| !cell.is_empty())
            .map(|(i, cell)| {
                json!({"order": i, "terms": cell.iter().map(term_json).collect::<Vec<_>>()})
            })
            .collect();
        Value::Array(out)
    };
    let dropped: Vec<Value> = r
        .truncation
        .dropped
        .iter()
        .map(|(q, mass)| json!({"exponent": q, "sup_bound": mass.sup_bound(f)}))
        .collect();
    let ledger: Value = r
        .smoothness_ledger
        .iter()
        .map(|(j, d)| (format!("p{j}"), json!(d)))
        .collect::<serde_json::Map<_, _>>()
        .into();
    let k_ref = r.convergence.threshold;
    json!({
        "config_sha256": config_hash,
        "n": r.n,
        "convergence_threshold": r.convergence.threshold,
        "kappa_displacement_bound": r.convergence.kappa_displacement,
        "smoothness_ledger": ledger,
        "lie_residuals_exact": r
            .lie_exact_stage1
            .iter()
            .chain(&r.lie_exact_stage2)
            .all(|(_, ok)| *ok),
        "generators": {
            "stage1": gen_json(&r.w_stage1),
            "stage2": gen_json(&r.w_stage2),
        },
        "hamiltonians": {
            "original": series_json(&r.h_original),
            "intermediate": series_json(&r.h_intermediate),
            "special": series_json(&r.h_special),
        },
        "remainders": {
            "stage1": rem_json(&r.remainder_stage1),
            "stage2": rem_json(&r.remainder_stage2),
        },
        "truncation": {
            "i_max": r.truncation.i_max,
            "q_min": r.truncation.q_min,
            "dropped": dropped,
            "residual_bound_at_threshold": r.truncation.residual_bound(f, k_ref),
        },
    })
}
