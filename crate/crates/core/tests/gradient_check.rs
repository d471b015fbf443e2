mod common;

use common::*;
use gxlt::encoder::Batch;

#[test]
fn masked_loss_matches_central_differences() {
    let params = tiny_params(11);
    let batch = masked_batch(&mut rng(1), 3, 16, 16);
    let check = grad_check(&params, Batch::Masked(&batch), 1e-4);
    eprintln!(
        "masked: {} coords, max rel {:.3e} at {} (analytic {:.6e}, numeric {:.6e})",
        check.coordinates, check.max_rel_error, check.worst, check.analytic, check.numeric
    );
    assert!(check.max_rel_error <= 1e-5);
}

#[test]
fn span_loss_matches_central_differences() {
    let params = tiny_params(12);
    let batch = span_batch(&mut rng(2), 3, 16, 16);
    let check = grad_check(&params, Batch::Span(&batch), 1e-4);
    eprintln!(
        "span: {} coords, max rel {:.3e} at {} (analytic {:.6e}, numeric {:.6e})",
        check.coordinates, check.max_rel_error, check.worst, check.analytic, check.numeric
    );
    assert!(check.max_rel_error <= 1e-5);
}
