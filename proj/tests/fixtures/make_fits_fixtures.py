"""Writes the FITS fixtures with astropy and freezes astropy's decoding of
them in fits_expected.json. Rerun only to regenerate the fixtures."""

import json
import pathlib

import numpy as np
from astropy.io import fits

HERE = pathlib.Path(__file__).parent


def common(h, date):
    h["DATE-OBS"] = date
    h["CDELT1"] = 1.02
    h["CDELT2"] = 1.02
    h["OBSERVER"] = ("O'Neil", "quote inside a string")
    h["EXPTIME"] = (0.125, "seconds")
    h["FLAG"] = True
    h["HISTORY"] = "written by make_fits_fixtures.py"


def int16_scaled():
    y, x = np.mgrid[0:5, 0:7]
    phys = 1000.0 + 0.5 * ((x * 37 + y * 101) % 2000 - 1000)
    raw = ((phys - 1000.0) / 0.5).astype(np.int16)
    raw[2, 3] = -32768
    out = fits.PrimaryHDU(raw, do_not_scale_image_data=True)
    out.header["BSCALE"] = 0.5
    out.header["BZERO"] = 1000.0
    out.header["BLANK"] = -32768
    common(out.header, "2023-08-31T16:35:12.500")
    return out


def float32_nan():
    rng = np.random.default_rng(11)
    data = rng.normal(1500.0, 200.0, size=(6, 9)).astype(np.float32)
    data[1, 4] = np.nan
    hdu = fits.PrimaryHDU(data)
    common(hdu.header, "2023-08-31")
    hdu.header["TIME-OBS"] = "21:35:00"
    hdu.header["ROTANGLE"] = -12.25
    return hdu


def float64_ext():
    rng = np.random.default_rng(12)
    data = rng.uniform(-1e6, 1e6, size=(4, 3))
    data[0, 0] = 1e-300
    data[3, 2] = -0.0
    hdu = fits.PrimaryHDU(data)
    common(hdu.header, "2023-08-31T22:35:00")
    ext = fits.ImageHDU(np.arange(6, dtype=">i2").reshape(2, 3), name="AUX")
    return fits.HDUList([hdu, ext])


def uint8():
    data = (np.arange(20, dtype=np.uint8) * 13).reshape(4, 5)
    hdu = fits.PrimaryHDU(data)
    common(hdu.header, "2023-08-31T16:00:00")
    return hdu


def int32():
    data = (np.arange(12, dtype=np.int32) * 123456789 - 600000000).reshape(3, 4)
    hdu = fits.PrimaryHDU(data)
    common(hdu.header, "2023-08-31T16:00:01")
    return hdu


def describe(path):
    h = fits.getheader(path)
    with fits.open(path) as hl:
        d = hl[0].data.astype(np.float64)
        if "BLANK" in h:
            raw = fits.open(path, do_not_scale_image_data=True)[0].data
            d[raw == h["BLANK"]] = np.nan
        return {
            "bitpix": h["BITPIX"],
            "width": h["NAXIS1"],
            "height": h["NAXIS2"],
            "hdus": len(hl),
            "values": [None if np.isnan(v) else float(v) for v in d.ravel()],
            "date_obs": h["DATE-OBS"],
            "observer": h["OBSERVER"],
            "exptime": h["EXPTIME"],
            "flag": bool(h["FLAG"]),
        }


def main():
    files = {
        "int16_scaled.fits": int16_scaled(),
        "float32_nan.fits": float32_nan(),
        "float64_ext.fits": float64_ext(),
        "uint8.fits": uint8(),
        "int32.fits": int32(),
    }
    expected = {}
    for name, obj in files.items():
        path = HERE / name
        obj.writeto(path, overwrite=True, output_verify="exception")
        expected[name] = describe(path)
    (HERE / "fits_expected.json").write_text(json.dumps(expected, indent=1) + "\n")


if __name__ == "__main__":
    main()
