// Reference values of h, h1 and phi_a computed with 50 significant digits,
// shared by the unit tests and the acceptance suite.

pub const H_TABLE: [(f64, f64); 20] = [
    (-1.0, 1.0),
    (-0.999, 0.99209224472101786295),
    (-0.5, 0.15342640972002734529),
    (-0.1, 0.0051755359079563288952),
    (-0.01, 0.000050167505033573228287),
    (-1e-5, 5.0000166667500005e-11),
    (-1e-9, 5.0000000016666666675e-19),
    (1e-12, 4.9999999999983333333e-25),
    (1e-8, 4.9999999833333334167e-17),
    (1e-4, 4.9998333416661667e-9),
    (0.05, 0.0012296723779036032186),
    (0.0999, 0.004831671312369206325),
    (0.1, 0.0048411977847573460483),
    (0.5, 0.10819766216224657297),
    (1.0, 0.38629436111989061883),
    (std::f64::consts::E, 2.1647952402514233587),
    (3.0, 2.5451774444795624753),
    (10.0, 16.376848000782075985),
    (100.0, 366.12717220096720454),
    (1e6, 12815525.373475332068),
];

pub const H1_TABLE: [(f64, f64); 20] = [
    (-0.5, 0.5),
    (-0.49, 0.36857864376269049512),
    (-0.25, 0.042893218813452475599),
    (-0.1, 0.0055728090000841214363),
    (-1e-3, 5.0050062587631456586e-7),
    (-1e-7, 5.0000005000000625e-15),
    (1e-12, 4.999999999995e-25),
    (1e-8, 4.999999950000000625e-17),
    (1e-5, 4.9999500006249912501e-11),
    (1e-3, 4.9950062412631044085e-7),
    (0.1, 0.0045548849896677730861),
    (0.5, 0.085786437626904951198),
    (1.0, 0.26794919243112270647),
    (1.5, 0.5),
    (4.0, 2.0),
    (10.0, 6.4174243050441599934),
    (100.0, 86.822553121242174797),
    (1e4, 9859.5751082729776314),
    (1e8, 99985858.86434091371),
    (1e12, 999998585787.43762655),
];

pub const PHI_TABLE: [(f64, f64, f64); 20] = [
    (1.0, 1.0, 0.71828182845904523536),
    (1.0, -1.0, 0.3678794411714423216),
    (0.5, 2.0, 2.8731273138361809414),
    (2.0, 0.5, 0.17957045711476130884),
    (1e-8, 3.0, 4.5000000450000003375),
    (1e-3, 1e-3, 5.0000016666670833334e-7),
    (1.0, 1e-6, 5.0000016666670833334e-13),
    (1.0, -1e-6, 4.9999983333337499999e-13),
    (3.0, -2.0, 0.55583097246407403982),
    (0.1, 10.0, 71.828182845904523536),
    (1.0, 10.0, 22015.465794806716517),
    (1.0, -10.0, 9.0000453999297624849),
    (1e-6, 1e-6, 5.0000000000016666667e-13),
    (5.0, 5.0, 2880195972.455434901),
    (1.0, 1e-4, 5.0001666708334166681e-9),
    (1.0, 2e-4, 2.0001333400002666756e-8),
    (0.01, -0.02, 0.00019998666733330666756),
    (1.0, 0.05, 0.0012710963760240396975),
    (2.0, -30.0, 14.75),
    (0.25, 1e-10, 5.0000000000416666667e-21),
];
