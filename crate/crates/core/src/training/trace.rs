use crate::controllers::ControllerParams;
use crate::dataset::Demonstration;
use crate::error::Result;
use crate::signals::ControlVector;

/// One tick of a prediction-versus-demonstration trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub u_demo: ControlVector,
    pub u_pred: ControlVector,
    pub mask: Option<Vec<f64>>,
    pub mask_u: Option<[f64; 3]>,
}

pub fn trace_rows(params: &ControllerParams, demo: &Demonstration) -> Result<Vec<TraceRow>> {
    demo.records
        .iter()
        .map(|r| {
            let out = params.act(&r.obs)?;
            Ok(TraceRow {
                t: r.t,
                u_demo: r.u,
                u_pred: out.u,
                mask: out.mask,
                mask_u: out.mask_u,
            })
        })
        .collect()
}

/// Per-tick CSV: `t`, demonstrated and predicted controls, then `m_*` and `m_u_*`
/// columns for attention controllers.
pub fn trace_comparison(params: &ControllerParams, demo: &Demonstration) -> Result<String> {
    let rows = trace_rows(params, demo)?;
    let mut out = String::from("t,u_demo_theta1,u_demo_theta2,u_demo_g,u_pred_theta1,u_pred_theta2,u_pred_g");
    if let Some(d) = params.spec.mask_dim() {
        for i in 0..params.spec.input_dim {
            out.push_str(&format!(",m_{i}"));
        }
        if d > params.spec.input_dim {
            out.push_str(",m_u_theta1,m_u_theta2,m_u_g");
        }
    }
    out.push('\n');
    for r in &rows {
        let mut fields: Vec<f64> = vec![r.t];
        fields.extend(r.u_demo.to_array());
        fields.extend(r.u_pred.to_array());
        if let Some(m) = &r.mask {
            fields.extend(m);
        }
        if let Some(mu) = r.mask_u {
            fields.extend(mu);
        }
        let line: Vec<String> = fields.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Ok(out)
}
