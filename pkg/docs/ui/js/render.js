// Pure rasterization of slice payloads into RGBA buffers, plus the
// world-to-cell mapping used for overlays. No canvas here so tests can
// inspect pixels directly.
export const UNKNOWN_COLOR = [42, 46, 53];
export const FREE_COLOR = [207, 214, 221];
export const OCCUPIED_COLOR = [72, 80, 92];
function put(data, index, rgb) {
    data[index * 4 + 0] = rgb[0];
    data[index * 4 + 1] = rgb[1];
    data[index * 4 + 2] = rgb[2];
    data[index * 4 + 3] = 255;
}
// Activation values map onto a dark-to-amber ramp; zero stays close to the
// occupancy background so only matched segments stand out.
export function activationColor(value, maxValue) {
    const span = maxValue > 0 ? maxValue : 1;
    const t = Math.max(0, Math.min(1, value / span));
    return [
        Math.round(42 + t * (255 - 42)),
        Math.round(46 + t * (176 - 46)),
        Math.round(53 + t * (32 - 53)),
    ];
}
export function sliceToImage(slice) {
    const { width, height, cells, layer } = slice;
    const data = new Uint8ClampedArray(width * height * 4);
    if (layer === "occupancy") {
        for (let i = 0; i < cells.length; i++) {
            const code = cells[i];
            put(data, i, code === 2 ? OCCUPIED_COLOR : code === 1 ? FREE_COLOR : UNKNOWN_COLOR);
        }
    }
    else {
        let maxValue = 0;
        for (const v of cells) {
            if (v > maxValue) {
                maxValue = v;
            }
        }
        for (let i = 0; i < cells.length; i++) {
            put(data, i, activationColor(cells[i], maxValue));
        }
    }
    return { width, height, data };
}
// World (x, y) in meters to fractional cell coordinates; null outside the
// returned extent (those cells are unknown and not drawn).
export function worldToCell(slice, x, y) {
    if (slice.width === 0 || slice.height === 0) {
        return null;
    }
    const cx = (x - slice.origin[0]) / slice.voxel_size;
    const cy = (y - slice.origin[1]) / slice.voxel_size;
    if (cx < 0 || cy < 0 || cx >= slice.width || cy >= slice.height) {
        return null;
    }
    return { cx, cy };
}
export function cellValueAt(slice, ix, iy) {
    return slice.cells[iy * slice.width + ix] ?? 0;
}
