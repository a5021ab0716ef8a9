//! Just enough DER to slice certificates apart: tag-length-value reading,
//! definite-length encoding, and the TBS surgery that SCT verification needs.

use thiserror::Error;

/// SEQUENCE
pub const TAG_SEQUENCE: u8 = 0x30;
/// OCTET STRING
pub const TAG_OCTET_STRING: u8 = 0x04;
/// BIT STRING
pub const TAG_BIT_STRING: u8 = 0x03;
/// OBJECT IDENTIFIER
pub const TAG_OID: u8 = 0x06;
/// Context-specific [3], constructed: the extensions block of a TBSCertificate.
pub const TAG_CTX_3: u8 = 0xa3;

/// Encoded OID 1.3.6.1.4.1.11129.2.4.2 (embedded SCT list).
pub const OID_SCT_LIST: [u8; 10] = [0x2b, 0x06, 0x01, 0x04, 0x01, 0xd6, 0x79, 0x02, 0x04, 0x02];
/// Encoded OID 1.3.6.1.4.1.11129.2.4.3 (precertificate poison).
pub const OID_PRECERT_POISON: [u8; 10] =
    [0x2b, 0x06, 0x01, 0x04, 0x01, 0xd6, 0x79, 0x02, 0x04, 0x03];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DerError {
    #[error("truncated DER element")]
    Truncated,
    #[error("indefinite or oversized DER length")]
    BadLength,
    #[error("expected tag {expected:#04x}, found {found:#04x}")]
    UnexpectedTag { expected: u8, found: u8 },
}

/// One decoded element: its tag, full encoding, and content octets.
#[derive(Debug, Clone, Copy)]
pub struct Tlv<'a> {
    pub tag: u8,
    /// The complete element including header.
    pub raw: &'a [u8],
    pub content: &'a [u8],
}

/// Reads the element at the start of `input`, returning it and the rest.
pub fn read_tlv(input: &[u8]) -> Result<(Tlv<'_>, &[u8]), DerError> {
    if input.len() < 2 {
        return Err(DerError::Truncated);
    }
    let tag = input[0];
    let first = input[1];
    let (len, header_len) = if first & 0x80 == 0 {
        (first as usize, 2)
    } else {
        let n = (first & 0x7f) as usize;
        if n == 0 || n > 4 || input.len() < 2 + n {
            return Err(DerError::BadLength);
        }
        let mut len = 0usize;
        for &b in &input[2..2 + n] {
            len = (len << 8) | b as usize;
        }
        (len, 2 + n)
    };
    let total = header_len.checked_add(len).ok_or(DerError::BadLength)?;
    if input.len() < total {
        return Err(DerError::Truncated);
    }
    Ok((
        Tlv {
            tag,
            raw: &input[..total],
            content: &input[header_len..total],
        },
        &input[total..],
    ))
}

/// Reads an element and insists on its tag.
pub fn expect_tlv(input: &[u8], tag: u8) -> Result<(Tlv<'_>, &[u8]), DerError> {
    let (tlv, rest) = read_tlv(input)?;
    if tlv.tag != tag {
        return Err(DerError::UnexpectedTag {
            expected: tag,
            found: tlv.tag,
        });
    }
    Ok((tlv, rest))
}

/// Splits a constructed element's content into its children.
pub fn children(tlv: Tlv<'_>) -> Result<Vec<Tlv<'_>>, DerError> {
    let mut rest = tlv.content;
    let mut out = Vec::new();
    while !rest.is_empty() {
        let (child, remaining) = read_tlv(rest)?;
        out.push(child);
        rest = remaining;
    }
    Ok(out)
}

/// Encodes `content` under `tag` with a definite length.
pub fn encode_tlv(tag: u8, content: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(content.len() + 6);
    out.push(tag);
    let len = content.len();
    if len < 0x80 {
        out.push(len as u8);
    } else {
        let bytes = len.to_be_bytes();
        let skip = bytes.iter().take_while(|&&b| b == 0).count();
        out.push(0x80 | (bytes.len() - skip) as u8);
        out.extend_from_slice(&bytes[skip..]);
    }
    out.extend_from_slice(content);
    out
}

/// True when the element is an Extension SEQUENCE whose OID equals `oid`.
fn extension_has_oid(extension: Tlv<'_>, oid: &[u8]) -> bool {
    read_tlv(extension.content)
        .map(|(first, _)| first.tag == TAG_OID && first.content == oid)
        .unwrap_or(false)
}

/// The TBSCertificate bytes of a certificate, exactly as signed.
pub fn tbs_of(cert_der: &[u8]) -> Result<&[u8], DerError> {
    let (cert, _) = expect_tlv(cert_der, TAG_SEQUENCE)?;
    let (tbs, _) = expect_tlv(cert.content, TAG_SEQUENCE)?;
    Ok(tbs.raw)
}

/// Whether the certificate carries an extension with the given encoded OID.
pub fn has_extension(cert_der: &[u8], oid: &[u8]) -> Result<bool, DerError> {
    let tbs = tbs_of(cert_der)?;
    let (tbs_tlv, _) = expect_tlv(tbs, TAG_SEQUENCE)?;
    for field in children(tbs_tlv)? {
        if field.tag == TAG_CTX_3 {
            let (extensions, _) = expect_tlv(field.content, TAG_SEQUENCE)?;
            for extension in children(extensions)? {
                if extension_has_oid(extension, oid) {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

/// Rebuilds the TBSCertificate with every SCT-list extension removed, which
/// is the structure a precertificate SCT signature covers. Returns the TBS
/// unchanged when no SCT extension exists. The rebuild recomputes all
/// enclosing lengths, so removing what was appended restores the original
/// bytes exactly.
pub fn tbs_without_sct_extension(cert_der: &[u8]) -> Result<Vec<u8>, DerError> {
    let tbs_raw = tbs_of(cert_der)?;
    let (tbs, _) = expect_tlv(tbs_raw, TAG_SEQUENCE)?;

    let mut rebuilt = Vec::with_capacity(tbs.content.len());
    let mut removed_any = false;
    for field in children(tbs)? {
        if field.tag != TAG_CTX_3 {
            rebuilt.extend_from_slice(field.raw);
            continue;
        }
        let (extensions, _) = expect_tlv(field.content, TAG_SEQUENCE)?;
        let mut kept = Vec::with_capacity(extensions.content.len());
        for extension in children(extensions)? {
            if extension_has_oid(extension, &OID_SCT_LIST) {
                removed_any = true;
            } else {
                kept.extend_from_slice(extension.raw);
            }
        }
        if kept.is_empty() {
            // The SCT list was the only extension; drop the [3] block.
            continue;
        }
        let sequence = encode_tlv(TAG_SEQUENCE, &kept);
        rebuilt.extend_from_slice(&encode_tlv(TAG_CTX_3, &sequence));
    }

    if removed_any {
        Ok(encode_tlv(TAG_SEQUENCE, &rebuilt))
    } else {
        Ok(tbs_raw.to_vec())
    }
}

/// Content of the subjectPublicKey BIT STRING inside an SPKI, i.e. the key
/// material in the form signature verifiers expect.
pub fn spki_key_bytes(spki_der: &[u8]) -> Result<Vec<u8>, DerError> {
    let (spki, _) = expect_tlv(spki_der, TAG_SEQUENCE)?;
    let kids = children(spki)?;
    let bit_string = kids
        .iter()
        .find(|c| c.tag == TAG_BIT_STRING)
        .ok_or(DerError::Truncated)?;
    // First content octet is the unused-bits count, zero for keys.
    if bit_string.content.is_empty() {
        return Err(DerError::Truncated);
    }
    Ok(bit_string.content[1..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tlv_round_trip_short_and_long_lengths() {
        for len in [0usize, 1, 127, 128, 255, 256, 70000] {
            let content = vec![0xabu8; len];
            let encoded = encode_tlv(TAG_OCTET_STRING, &content);
            let (tlv, rest) = read_tlv(&encoded).unwrap();
            assert_eq!(tlv.tag, TAG_OCTET_STRING);
            assert_eq!(tlv.content, &content[..]);
            assert!(rest.is_empty());
        }
    }

    #[test]
    fn truncated_input_is_rejected() {
        assert!(matches!(read_tlv(&[0x30]), Err(DerError::Truncated)));
        let encoded = encode_tlv(TAG_SEQUENCE, &[1, 2, 3]);
        assert!(read_tlv(&encoded[..3]).is_err());
        assert!(read_tlv(&[0x30, 0x85, 0, 0, 0, 0, 0]).is_err());
    }

    #[test]
    fn children_splits_sequences() {
        let a = encode_tlv(0x02, &[1]);
        let b = encode_tlv(0x02, &[2]);
        let seq = encode_tlv(TAG_SEQUENCE, &[a.clone(), b.clone()].concat());
        let (tlv, _) = read_tlv(&seq).unwrap();
        let kids = children(tlv).unwrap();
        assert_eq!(kids.len(), 2);
        assert_eq!(kids[0].raw, &a[..]);
        assert_eq!(kids[1].raw, &b[..]);
    }
}
