use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use clens_core::report::chart_payload;
use clens_core::{detect_concepts, Error as CoreError};
use serde::Deserialize;
use serde_json::Value;

use crate::{parse_theta, ApiError, Shared};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnalyzeRequest {
    image_id: Option<String>,
    activation_vector: Option<Vec<Value>>,
    theta: Option<Value>,
}

fn parse_request(body: &[u8]) -> Result<AnalyzeRequest, ApiError> {
    let value: Value = serde_json::from_slice(body).map_err(|e| {
        // Overflowing literals such as 1e999 are non-finite values, not syntax errors.
        if e.to_string().starts_with("number out of range") {
            ApiError::unprocessable(format!("non-finite number in request: {e}"))
        } else {
            ApiError::bad_request(format!("malformed JSON: {e}"))
        }
    })?;
    serde_json::from_value(value).map_err(|e| ApiError::bad_request(format!("invalid request: {e}")))
}

/// Body: `{"image_id": ..., "theta": ...}` or `{"activation_vector": [...], "theta": ...}`.
pub(crate) async fn analyze(State(s): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let req = parse_request(&body)?;
    let theta_text = match &req.theta {
        Some(Value::Number(n)) => n.to_string(),
        Some(other) => return Err(ApiError::bad_request(format!("theta must be a number, got {other}"))),
        None => return Err(ApiError::bad_request("missing theta")),
    };
    let (_, theta) = parse_theta(&theta_text, &s.margins.thresholds)?;
    let neurons = s.holdout.bundle.neuron_count();

    let owned;
    let vector: &[f64] = match (&req.image_id, &req.activation_vector) {
        (Some(_), Some(_)) => return Err(ApiError::bad_request("give either image_id or activation_vector, not both")),
        (None, None) => return Err(ApiError::bad_request("missing image_id or activation_vector")),
        (Some(id), None) => s
            .holdout
            .bundle
            .activation
            .row_of(id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown image_id {id:?}")))?,
        (None, Some(values)) => {
            if values.len() != neurons {
                return Err(ApiError::bad_request(format!(
                    "activation_vector has {} values, expected {neurons}",
                    values.len()
                )));
            }
            owned = values
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    v.as_f64()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| ApiError::unprocessable(format!("activation_vector[{i}] = {v} is not a finite number")))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            &owned
        }
    };

    let detections = detect_concepts(vector, &s.holdout.assignments, &s.margins, theta).map_err(|e| match e {
        CoreError::NonFiniteVector { .. } => ApiError::unprocessable(e.to_string()),
        _ => ApiError::bad_request(e.to_string()),
    })?;
    Ok(([(header::CONTENT_TYPE, "application/json")], chart_payload(&detections)).into_response())
}
