var mask = ndvi.gt(0.3);
var out = img.where(mask, 1).updateMask(mask.gt(0));
