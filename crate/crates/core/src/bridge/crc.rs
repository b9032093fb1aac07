//! CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xorout.

const POLY: u16 = 0x1021;

const TABLE: [u16; 256] = build_table();

const fn build_table() -> [u16; 256] {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = (i as u16) << 8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x8000 != 0 { (crc << 1) ^ POLY } else { crc << 1 };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

pub fn crc16_ccitt_false(data: &[u8]) -> u16 {
    data.iter()
        .fold(0xFFFF, |crc, &b| (crc << 8) ^ TABLE[usize::from((crc >> 8) as u8 ^ b)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_value() {
        assert_eq!(crc16_ccitt_false(b"123456789"), 0x29B1);
        assert_eq!(crc16_ccitt_false(&[]), 0xFFFF);
    }

    #[test]
    fn matches_reference_crate() {
        let reference = crc::Crc::<u16>::new(&crc::CRC_16_IBM_3740);
        let mut data = Vec::new();
        for i in 0..300u32 {
            data.push((i.wrapping_mul(2654435761) >> 13) as u8);
            assert_eq!(crc16_ccitt_false(&data), reference.checksum(&data));
        }
    }
}
