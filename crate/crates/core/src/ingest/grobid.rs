use std::collections::HashMap;
use std::io::Read;
use std::time::Duration;

use super::IngestError;

/// Converts a PDF into TEI XML.
pub trait PdfConverter: Send + Sync {
    fn convert(&self, pdf: &[u8]) -> Result<Vec<u8>, IngestError>;
}

/// Client for a Grobid server's `processFulltextDocument` endpoint.
pub struct GrobidClient {
    base_url: String,
    agent: ureq::Agent,
}

impl GrobidClient {
    pub fn new(base_url: &str) -> Self {
        GrobidClient {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(300))
                .build(),
        }
    }
}

impl PdfConverter for GrobidClient {
    fn convert(&self, pdf: &[u8]) -> Result<Vec<u8>, IngestError> {
        let boundary = "----scirag-grobid-boundary-7f3a9c";
        let mut body = Vec::with_capacity(pdf.len() + 256);
        body.extend_from_slice(format!("--{boundary}\r\n").as_bytes());
        body.extend_from_slice(
            b"Content-Disposition: form-data; name=\"input\"; filename=\"input.pdf\"\r\n",
        );
        body.extend_from_slice(b"Content-Type: application/pdf\r\n\r\n");
        body.extend_from_slice(pdf);
        body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());

        let url = format!("{}/api/processFulltextDocument", self.base_url);
        let resp = self
            .agent
            .post(&url)
            .set(
                "Content-Type",
                &format!("multipart/form-data; boundary={boundary}"),
            )
            .set("Accept", "application/xml")
            .send_bytes(&body)
            .map_err(|e| IngestError::Conversion(e.to_string()))?;
        let mut out = Vec::new();
        resp.into_reader()
            .read_to_end(&mut out)
            .map_err(|e| IngestError::Conversion(e.to_string()))?;
        Ok(out)
    }
}

/// Returns pre-recorded TEI for known PDF bytes.
#[derive(Default)]
pub struct CannedConverter {
    responses: HashMap<Vec<u8>, Vec<u8>>,
}

impl CannedConverter {
    pub fn with(mut self, pdf: &[u8], tei: &[u8]) -> Self {
        self.responses.insert(pdf.to_vec(), tei.to_vec());
        self
    }
}

impl PdfConverter for CannedConverter {
    fn convert(&self, pdf: &[u8]) -> Result<Vec<u8>, IngestError> {
        self.responses
            .get(pdf)
            .cloned()
            .ok_or_else(|| IngestError::Conversion("no canned response for input".into()))
    }
}
