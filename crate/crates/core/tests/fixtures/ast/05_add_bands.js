var out = img.addBands(ndvi).addBands(evi);
