/*
 * sample_api.h: a numeric and imaging helper library used to exercise the
 * stub generator. Kernel-backed entry points come first.
 */

/**
 * Does nothing; measures launch cost.
 */
void noop(void);

/**
 * Occupies the device for ns nanoseconds.
 */
void delay(uint64_t ns);

/**
 * Copies n bytes.
 */
void memcopy(void* dst, const void* src, uint64_t n);

/**
 * Adds one to each of the n elements.
 */
void vec_increment(int* data, int n);

/**
 * y = alpha * x + y
 * @param[in,out] y
 * @param[in] x
 */
void saxpy(float* y, const float* x, int n, float alpha);

/**
 * One forward elimination step on the n x n system a x = b.
 * @size a n * n * sizeof(float)
 */
void gaussian_step(float* a, float* b, int n, int t);

/**
 * Jacobi relaxation over an nx by ny by nz grid.
 * @size grid nx * ny * nz * sizeof(float)
 */
void grid_relax(float* grid, int nx, int ny, int nz, int iters);

/**
 * Cheapest top to bottom path cost per column.
 * @param[out] result
 * @size wall rows * cols * sizeof(int)
 * @size result cols * sizeof(int)
 */
void path_dp(const int* wall, int* result, int rows, int cols);

int add(int a, int b);

void vec_abs_f32(float* data, int n);

void vec_abs_f64(double* data, size_t len);

void vec_abs_i32(int* data, int count);

void vec_neg_f32(float* data, int n);

void vec_neg_f64(double* data, size_t len);

void vec_neg_i32(int* data, int count);

void vec_square_f32(float* data, int n);

void vec_square_f64(double* data, size_t len);

void vec_square_i32(int* data, int count);

void vec_sqrt_f32(float* data, int n);

void vec_sqrt_f64(double* data, size_t len);

void vec_sqrt_i32(int* data, int count);

void vec_exp_f32(float* data, int n);

void vec_exp_f64(double* data, size_t len);

void vec_exp_i32(int* data, int count);

void vec_log_f32(float* data, int n);

void vec_log_f64(double* data, size_t len);

void vec_log_i32(int* data, int count);

void vec_relu_f32(float* data, int n);

void vec_relu_f64(double* data, size_t len);

void vec_relu_i32(int* data, int count);

void vec_floor_f32(float* data, int n);

void vec_floor_f64(double* data, size_t len);

void vec_floor_i32(int* data, int count);

void vec_ceil_f32(float* data, int n);

void vec_ceil_f64(double* data, size_t len);

void vec_ceil_i32(int* data, int count);

void vec_recip_f32(float* data, int n);

void vec_recip_f64(double* data, size_t len);

void vec_recip_i32(int* data, int count);

void vec_sign_f32(float* data, int n);

void vec_sign_f64(double* data, size_t len);

void vec_sign_i32(int* data, int count);

void vec_round_f32(float* data, int n);

void vec_round_f64(double* data, size_t len);

void vec_round_i32(int* data, int count);

void vec_tanh_f32(float* data, int n);

void vec_tanh_f64(double* data, size_t len);

void vec_tanh_i32(int* data, int count);

void vec_cos_f32(float* data, int n);

void vec_cos_f64(double* data, size_t len);

void vec_cos_i32(int* data, int count);

void vec_sin_f32(float* data, int n);

void vec_sin_f64(double* data, size_t len);

void vec_sin_i32(int* data, int count);

void vec_trunc_f32(float* data, int n);

void vec_trunc_f64(double* data, size_t len);

void vec_trunc_i32(int* data, int count);

void vec_cube_f32(float* data, int n);

void vec_cube_f64(double* data, size_t len);

void vec_cube_i32(int* data, int count);

/**
 * dst[i] = lhs[i] add rhs[i]
 * @param[out] dst
 */
void vec_add2_f32(float* dst, const float* lhs, const float* rhs, size_t len);

/**
 * dst[i] = lhs[i] add rhs[i]
 * @param[out] dst
 */
void vec_add2_f64(double* dst, const double* lhs, const double* rhs, size_t len);

/**
 * dst[i] = lhs[i] add rhs[i]
 * @param[out] dst
 */
void vec_add2_i32(int* dst, const int* lhs, const int* rhs, size_t len);

/**
 * dst[i] = lhs[i] sub rhs[i]
 * @param[out] dst
 */
void vec_sub2_f32(float* dst, const float* lhs, const float* rhs, size_t len);

/**
 * dst[i] = lhs[i] sub rhs[i]
 * @param[out] dst
 */
void vec_sub2_f64(double* dst, const double* lhs, const double* rhs, size_t len);

/**
 * dst[i] = lhs[i] sub rhs[i]
 * @param[out] dst
 */
void vec_sub2_i32(int* dst, const int* lhs, const int* rhs, size_t len);

/**
 * dst[i] = lhs[i] mul rhs[i]
 * @param[out] dst
 */
void vec_mul2_f32(float* dst, const float* lhs, const float* rhs, size_t len);

/**
 * dst[i] = lhs[i] mul rhs[i]
 * @param[out] dst
 */
void vec_mul2_f64(double* dst, const double* lhs, const double* rhs, size_t len);

/**
 * dst[i] = lhs[i] mul rhs[i]
 * @param[out] dst
 */
void vec_mul2_i32(int* dst, const int* lhs, const int* rhs, size_t len);

/**
 * dst[i] = lhs[i] div rhs[i]
 * @param[out] dst
 */
void vec_div2_f32(float* dst, const float* lhs, const float* rhs, size_t len);

/**
 * dst[i] = lhs[i] div rhs[i]
 * @param[out] dst
 */
void vec_div2_f64(double* dst, const double* lhs, const double* rhs, size_t len);

/**
 * dst[i] = lhs[i] div rhs[i]
 * @param[out] dst
 */
void vec_div2_i32(int* dst, const int* lhs, const int* rhs, size_t len);

/**
 * dst[i] = lhs[i] min rhs[i]
 * @param[out] dst
 */
void vec_min2_f32(float* dst, const float* lhs, const float* rhs, size_t len);

/**
 * dst[i] = lhs[i] min rhs[i]
 * @param[out] dst
 */
void vec_min2_f64(double* dst, const double* lhs, const double* rhs, size_t len);

/**
 * dst[i] = lhs[i] min rhs[i]
 * @param[out] dst
 */
void vec_min2_i32(int* dst, const int* lhs, const int* rhs, size_t len);

/**
 * dst[i] = lhs[i] max rhs[i]
 * @param[out] dst
 */
void vec_max2_f32(float* dst, const float* lhs, const float* rhs, size_t len);

/**
 * dst[i] = lhs[i] max rhs[i]
 * @param[out] dst
 */
void vec_max2_f64(double* dst, const double* lhs, const double* rhs, size_t len);

/**
 * dst[i] = lhs[i] max rhs[i]
 * @param[out] dst
 */
void vec_max2_i32(int* dst, const int* lhs, const int* rhs, size_t len);

/**
 * dst[i] = lhs[i] hypot rhs[i]
 * @param[out] dst
 */
void vec_hypot2_f32(float* dst, const float* lhs, const float* rhs, size_t len);

/**
 * dst[i] = lhs[i] hypot rhs[i]
 * @param[out] dst
 */
void vec_hypot2_f64(double* dst, const double* lhs, const double* rhs, size_t len);

/**
 * dst[i] = lhs[i] hypot rhs[i]
 * @param[out] dst
 */
void vec_hypot2_i32(int* dst, const int* lhs, const int* rhs, size_t len);

/**
 * @param[out] result
 */
void reduce_sum_f32(const float* values, int values_len, float result[1]);

/**
 * @param[out] result
 */
void reduce_sum_f64(const double* values, int values_len, double result[1]);

/**
 * @param[out] result
 */
void reduce_sum_i32(const int* values, int values_len, int result[1]);

/**
 * @param[out] result
 */
void reduce_prod_f32(const float* values, int values_len, float result[1]);

/**
 * @param[out] result
 */
void reduce_prod_f64(const double* values, int values_len, double result[1]);

/**
 * @param[out] result
 */
void reduce_prod_i32(const int* values, int values_len, int result[1]);

/**
 * @param[out] result
 */
void reduce_mean_f32(const float* values, int values_len, float result[1]);

/**
 * @param[out] result
 */
void reduce_mean_f64(const double* values, int values_len, double result[1]);

/**
 * @param[out] result
 */
void reduce_mean_i32(const int* values, int values_len, int result[1]);

/**
 * @param[out] result
 */
void reduce_norm2_f32(const float* values, int values_len, float result[1]);

/**
 * @param[out] result
 */
void reduce_norm2_f64(const double* values, int values_len, double result[1]);

/**
 * @param[out] result
 */
void reduce_norm2_i32(const int* values, int values_len, int result[1]);

/**
 * @param[out] result
 */
void reduce_argmax_f32(const float* values, int values_len, float result[1]);

/**
 * @param[out] result
 */
void reduce_argmax_f64(const double* values, int values_len, double result[1]);

/**
 * @param[out] result
 */
void reduce_argmax_i32(const int* values, int values_len, int result[1]);

void vec_scale_f32(float* v, int n_v, float k);

void vec_scale_f64(double* v, int n_v, double k);

void vec_scale_i32(int* v, int n_v, int k);

void vec_offset_f32(float* v, int n_v, float k);

void vec_offset_f64(double* v, int n_v, double k);

void vec_offset_i32(int* v, int n_v, int k);

void vec_fill_f32(float* v, int n_v, float k);

void vec_fill_f64(double* v, int n_v, double k);

void vec_fill_i32(int* v, int n_v, int k);

void img_blur(unsigned char* pixels, int pixels_len, int strength);

void img_sharpen(unsigned char* pixels, int pixels_len, int strength);

void img_invert(unsigned char* pixels, int pixels_len, int strength);

void img_threshold(unsigned char* pixels, int pixels_len, int strength);

void img_equalize(unsigned char* pixels, int pixels_len, int strength);

void img_posterize(unsigned char* pixels, int pixels_len, int strength);

/**
 * @param[out] bins
 */
void img_histogram(const unsigned char* pixels, int num_pixels, unsigned int bins[256]);

/**
 * @param[out] bins
 */
void img_moments(const unsigned char* pixels, int num_pixels, unsigned int bins[256]);

/**
 * @param[out] out
 */
double stat_dot(const double* x, const double* y, int count, double out[1]);

/**
 * @param[out] out
 */
double stat_cross_corr(const double* x, const double* y, int count, double out[1]);

/**
 * @param[out] out
 */
double stat_l1_dist(const double* x, const double* y, int count, double out[1]);

void seq_cumsum_f32(float* items, long items_count);

void seq_diff_f32(float* items, long items_count);

void seq_reverse_f32(float* items, long items_count);

void seq_sort_f32(float* items, long items_count);

void seq_unique_f32(float* items, long items_count);

void seq_cumsum_f64(double* items, long items_count);

void seq_diff_f64(double* items, long items_count);

void seq_reverse_f64(double* items, long items_count);

void seq_sort_f64(double* items, long items_count);

void seq_unique_f64(double* items, long items_count);

void seq_cumsum_i32(int* items, long items_count);

void seq_diff_i32(int* items, long items_count);

void seq_reverse_i32(int* items, long items_count);

void seq_sort_i32(int* items, long items_count);

void seq_unique_i32(int* items, long items_count);

/**
 * @param[out] buf
 * @space buf device
 */
void dev_fill_f32(float* buf, int count, float value);

/**
 * @param[out] buf
 * @space buf device
 */
void dev_fill_f64(double* buf, int count, double value);

/**
 * @param[out] buf
 * @space buf device
 */
void dev_fill_i32(int* buf, int count, int value);

/**
 * @param[out] buf
 * @space buf device
 */
void dev_zero_f32(float* buf, int count, float value);

/**
 * @param[out] buf
 * @space buf device
 */
void dev_zero_f64(double* buf, int count, double value);

/**
 * @param[out] buf
 * @space buf device
 */
void dev_zero_i32(int* buf, int count, int value);

/**
 * @param[out] buf
 * @space buf device
 */
void dev_iota_f32(float* buf, int count, float value);

/**
 * @param[out] buf
 * @space buf device
 */
void dev_iota_f64(double* buf, int count, double value);

/**
 * @param[out] buf
 * @space buf device
 */
void dev_iota_i32(int* buf, int count, int value);

/**
 * @param[out] dst
 * @space dst device
 * @space src device
 */
void dev_copy_f32(float* dst, const float* src, int nelem);

/**
 * @param[out] dst
 * @space dst device
 * @space src device
 */
void dev_copy_f64(double* dst, const double* src, int nelem);

/**
 * @param[out] dst
 * @space dst device
 * @space src device
 */
void dev_copy_i32(int* dst, const int* src, int nelem);

int set_seed(uint64_t seed);

int set_threads(int threads);

int set_tolerance(double tol);

int sync_all(void);

int mul_i32(int a, int b);

int fma_f32(float a, float b, float c);

int clamp_f64(double v, double lo, double hi);

int bit_count(uint32_t word);

int gcd_u64(uint64_t a, uint64_t b);

int lerp_f32(float a, float b, float t);

void sig_fft(float samples[1024]);

void sig_ifft(float samples[1024]);

void sig_hann(float samples[1024]);

void sig_hamming(float samples[1024]);

void sig_detrend(float samples[1024]);

/**
 * @param[out] scratch
 */
int bytes_encode(const unsigned char* bytes, size_t length, unsigned char* scratch, size_t scratch_len);

/**
 * @param[out] scratch
 */
int bytes_decode(const unsigned char* bytes, size_t length, unsigned char* scratch, size_t scratch_len);

/**
 * @param[out] scratch
 */
int bytes_checksum(const unsigned char* bytes, size_t length, unsigned char* scratch, size_t scratch_len);

void bits_pack(uint8_t* buf, int buf_size);

void bits_unpack(uint8_t* buf, int buf_size);

void bits_swap16(uint8_t* buf, int buf_size);

void bits_swap32(uint8_t* buf, int buf_size);

void vec_axpby_f32(float* y, const float* x, int n, float a, float b);

void vec_axpby_f64(double* y, const double* x, int n, double a, double b);

void vec_axpby_i32(int* y, const int* x, int n, int a, int b);

void vec_clip_f32(float* data, int num, float lo, float hi);

void vec_clip_f64(double* data, int num, double lo, double hi);

void vec_clip_i32(int* data, int num, int lo, int hi);

void vec_normalize_f32(float* data, int num, float lo, float hi);

void vec_normalize_f64(double* data, int num, double lo, double hi);

void vec_normalize_i32(int* data, int num, int lo, int hi);

void mem_set(void* dst, int value, size_t bytes);

void mem_zero(void* dst, size_t bytes);

void mem_move(void* dst, const void* src, size_t bytes);

int mem_compare(const void* a, const void* b, size_t bytes);

void mem_xor(void* dst, const void* key, size_t bytes, size_t key_bytes);

void mat_mul_f32(float* c, const float* a, const float* b, int m, int k, int p);

void mat_transpose_f32(float* dst, const float* src, int rows, int cols);

void mat_identity_f32(float* m, int dim);

void mat_mul_f64(double* c, const double* a, const double* b, int m, int k, int p);

void mat_transpose_f64(double* dst, const double* src, int rows, int cols);

void mat_identity_f64(double* m, int dim);

void mat_mul_i32(int* c, const int* a, const int* b, int m, int k, int p);

void mat_transpose_i32(int* dst, const int* src, int rows, int cols);

void mat_identity_i32(int* m, int dim);

void img_resize(unsigned char* dst, const unsigned char* src, int width, int height);

void img_rotate(unsigned char* dst, const unsigned char* src, int width, int height);

void img_flip(unsigned char* dst, const unsigned char* src, int width, int height);

void img_crop(unsigned char* dst, const unsigned char* src, int width, int height);

void img_gray_rgb(unsigned char* rgb, int width, int height);

void img_sepia_rgb(unsigned char* rgb, int width, int height);

void tensor_fill(void* base, int elem_bytes, int elems, int pattern);

void tensor_cast(float* dst, const void* src, int elems, int src_elem_bytes);

void stencil_2d(float* field, int w, int h, float weight);

void conv1d(float* dst, const float* src, const float* taps, int samples, int ntaps);

void prefix_scan(unsigned int* v, int n, const void* op_state, int state_bytes);

void matvec(double* y, const double* a, const double* x, int rows, int cols);
