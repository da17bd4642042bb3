//! Training emissions and the nine-row climate performance model card.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarbonParams {
    pub power_kw: f64,
    pub hours: f64,
    pub grid_intensity_g_per_kwh: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inference_g_per_sample: Option<f64>,
}

impl CarbonParams {
    pub fn new(power_kw: f64, hours: f64, grid_intensity_g_per_kwh: f64) -> Self {
        CarbonParams {
            power_kw,
            hours,
            grid_intensity_g_per_kwh,
            inference_g_per_sample: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("power_kw", Some(self.power_kw)),
            ("hours", Some(self.hours)),
            ("grid_intensity_g_per_kwh", Some(self.grid_intensity_g_per_kwh)),
            ("inference_g_per_sample", self.inference_g_per_sample),
        ];
        for (name, value) in fields {
            if let Some(v) = value {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::invalid(format!("{name} must be finite and non-negative, got {v}")));
                }
            }
        }
        Ok(())
    }
}

/// Grams CO2e: power (kW) × time (h) × grid intensity (g/kWh).
pub fn co2_emissions(params: &CarbonParams) -> Result<f64> {
    params.validate()?;
    Ok(params.power_kw * params.hours * params.grid_intensity_g_per_kwh)
}

pub fn format_kg(grams: f64) -> String {
    format!("{:.2} kg", grams / 1000.0)
}

pub fn format_mg(grams: f64) -> String {
    format!("{:.2} mg", grams * 1000.0)
}

/// Card inputs. Every field is required; they are optional here so a partial
/// document can be reported field by field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCardInput {
    pub model_name: Option<String>,
    pub publicly_available: Option<bool>,
    pub final_model_hours: Option<f64>,
    pub all_experiments_hours: Option<f64>,
    pub power_kw: Option<f64>,
    pub location: Option<String>,
    pub grid_intensity_g_per_kwh: Option<f64>,
    pub inference_g_per_sample: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardRow {
    pub item: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    pub model_name: String,
    pub publicly_available: bool,
    pub final_model_hours: f64,
    pub all_experiments_hours: f64,
    pub power_kw: f64,
    pub location: String,
    pub grid_intensity_g_per_kwh: f64,
    pub final_model_co2eq_g: f64,
    pub all_experiments_co2eq_g: f64,
    pub inference_co2eq_g_per_sample: f64,
    pub rows: Vec<CardRow>,
}

pub fn render_model_card(input: &ModelCardInput) -> Result<ModelCard> {
    let mut missing = Vec::new();
    macro_rules! need {
        ($field:ident) => {
            match &input.$field {
                Some(v) => Some(v.clone()),
                None => {
                    missing.push(stringify!($field));
                    None
                }
            }
        };
    }
    let model_name = need!(model_name);
    let publicly_available = need!(publicly_available);
    let final_hours = need!(final_model_hours);
    let all_hours = need!(all_experiments_hours);
    let power_kw = need!(power_kw);
    let location = need!(location);
    let intensity = need!(grid_intensity_g_per_kwh);
    let inference = need!(inference_g_per_sample);
    if !missing.is_empty() {
        return Err(Error::invalid(format!("model card is missing: {}", missing.join(", "))));
    }
    let (model_name, publicly_available, final_hours, all_hours, power_kw, location, intensity, inference) = (
        model_name.unwrap(),
        publicly_available.unwrap(),
        final_hours.unwrap(),
        all_hours.unwrap(),
        power_kw.unwrap(),
        location.unwrap(),
        intensity.unwrap(),
        inference.unwrap(),
    );

    let final_g = co2_emissions(&CarbonParams::new(power_kw, final_hours, intensity))?;
    let mut all = CarbonParams::new(power_kw, all_hours, intensity);
    all.inference_g_per_sample = Some(inference);
    let all_g = co2_emissions(&all)?;

    let row = |item: &str, value: String| CardRow {
        item: item.to_string(),
        value,
    };
    let rows = vec![
        row("Model publicly available?", if publicly_available { "Yes" } else { "No" }.to_string()),
        row("Time to train final model", format!("{final_hours} hours")),
        row("Time for all experiments", format!("{all_hours} hours")),
        row("Power of GPU and CPU", format!("{power_kw} kW")),
        row("Location for computations", location.clone()),
        row("Energy mix at location", format!("{intensity} gCO2eq/kWh")),
        row("CO2eq for final model", format_kg(final_g)),
        row("CO2eq for all experiments", format_kg(all_g)),
        row("Average CO2eq for inference per sample", format_mg(inference)),
    ];
    Ok(ModelCard {
        model_name,
        publicly_available,
        final_model_hours: final_hours,
        all_experiments_hours: all_hours,
        power_kw,
        location,
        grid_intensity_g_per_kwh: intensity,
        final_model_co2eq_g: final_g,
        all_experiments_co2eq_g: all_g,
        inference_co2eq_g_per_sample: inference,
        rows,
    })
}

impl ModelCard {
    pub fn render_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.item.len()).max().unwrap_or(0) + 4;
        let mut out = format!("{}\n", self.model_name);
        for (i, r) in self.rows.iter().enumerate() {
            let label = format!("{}. {}", i + 1, r.item);
            out.push_str(&format!("{label:<width$}{}\n", r.value));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_card() -> ModelCardInput {
        ModelCardInput {
            model_name: Some("ClimateBert".into()),
            publicly_available: Some(true),
            final_model_hours: Some(48.0),
            all_experiments_hours: Some(350.0),
            power_kw: Some(0.7),
            location: Some("Germany".into()),
            grid_intensity_g_per_kwh: Some(470.0),
            inference_g_per_sample: Some(0.00062),
        }
    }

    #[test]
    fn emissions_formula() {
        let g = co2_emissions(&CarbonParams::new(0.7, 48.0, 470.0)).unwrap();
        assert!((g - 15_792.0).abs() < 1e-6);
        assert_eq!(format_kg(g), "15.79 kg");
        assert_eq!(co2_emissions(&CarbonParams::new(3.0, 0.0, 400.0)).unwrap(), 0.0);
        assert!(co2_emissions(&CarbonParams::new(-1.0, 1.0, 1.0)).unwrap_err().is_usage());
        assert!(co2_emissions(&CarbonParams::new(1.0, f64::NAN, 1.0)).is_err());
    }

    #[test]
    fn card_rows() {
        let card = render_model_card(&paper_card()).unwrap();
        let values: Vec<&str> = card.rows.iter().map(|r| r.value.as_str()).collect();
        assert_eq!(
            values,
            [
                "Yes",
                "48 hours",
                "350 hours",
                "0.7 kW",
                "Germany",
                "470 gCO2eq/kWh",
                "15.79 kg",
                "115.15 kg",
                "0.62 mg"
            ]
        );
        let text = card.render_text();
        assert!(text.contains("8. CO2eq for all experiments"));
    }

    #[test]
    fn missing_fields_listed() {
        let mut input = paper_card();
        input.location = None;
        input.power_kw = None;
        let err = render_model_card(&input).unwrap_err().to_string();
        assert!(err.contains("power_kw") && err.contains("location"), "{err}");
    }

    #[test]
    fn zero_hours_card() {
        let mut input = paper_card();
        input.final_model_hours = Some(0.0);
        input.all_experiments_hours = Some(0.0);
        let card = render_model_card(&input).unwrap();
        assert_eq!(card.rows[6].value, "0.00 kg");
        assert_eq!(card.rows[7].value, "0.00 kg");
    }
}
